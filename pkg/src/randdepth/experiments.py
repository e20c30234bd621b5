"""Desk-scale drivers for the two tuning experiments.

Experiment 1 runs NSGA-II on (MSE, fit time) with random depth on and off
for each (dataset, noise columns) cell. Experiment 2 runs random search
with random depth on, off and the hybrid protocol, scoring final models on
an external test set.
"""

from __future__ import annotations

import csv
import statistics
import traceback
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ._kernels import warmup
from .core import Dataset, RngStream, mse
from .friedman import generate, sample_spec
from .tuning import (
    Candidate,
    Learner,
    ParamSpace,
    boost_space,
    cv_evaluator,
    fast_nondominated_sort,
    forest_space,
    holdout_evaluator,
    nondominated_filter,
    nsga2,
    random_search,
)

FAMILIES = ("boost", "forest")


def scaled(full: int, scale: float, minimum: int = 1) -> int:
    return max(minimum, int(round(full * scale)))


def friedman_pair(seed: int, index: int, n: int, n_test: int, p_signal: int, p_noise: int):
    """Training and external test data sharing one target function.

    The target function depends only on ``(seed, index)``, so the same
    dataset with a different number of noise columns keeps its signal.
    """
    base = RngStream(seed).child("dataset", index)
    spec = sample_spec(p_signal, p_noise, base.child("spec"))
    train = generate(spec, n, base.child("train", p_noise))
    test = generate(spec, n_test, base.child("test", p_noise))
    return spec, train.dataset, test.dataset


def family_space(family: str, fixed: Optional[int] = None) -> ParamSpace:
    return boost_space(fixed_iterations=fixed) if family == "boost" else forest_space(fixed_trees=fixed)


def family_learner(family: str, max_depth: int, fixed: Optional[int] = None) -> Learner:
    if family == "boost":
        return Learner("boost", max_depth=max_depth, n_iterations=fixed or 200)
    return Learner("forest", max_depth=max_depth, n_trees=fixed or 200)


def write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence], manifest: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*header, "manifest"])
        for row in rows:
            w.writerow([_cell(v) for v in row] + [manifest])


def _cell(v):
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return v


def _ranks(cands: Sequence[Candidate]) -> list[int]:
    """Nondominated rank (0 = front) per candidate; invalid ones get -1."""
    valid = [i for i, c in enumerate(cands) if c.valid]
    ranks = [-1] * len(cands)
    if valid:
        objs = np.array([cands[i].objectives for i in valid])
        for r, front in enumerate(fast_nondominated_sort(objs)):
            for t in front:
                ranks[valid[t]] = r
    return ranks


# --- experiment 1 -------------------------------------------------------------


@dataclass(frozen=True)
class Exp1Settings:
    n_datasets: int = 4
    p_noise: tuple[int, ...] = (0, 10, 20)
    n: int = 10_000
    n_test: int = 5_000
    p_signal: int = 10
    generations: int = 10
    population: int = 80
    max_depth: int = 5
    families: tuple[str, ...] = FAMILIES
    seed: int = 0

    @classmethod
    def at_scale(cls, scale: float, **overrides) -> "Exp1Settings":
        pop = scaled(80, scale, 4)
        base = cls(
            n=scaled(10_000, scale, 20),
            n_test=scaled(5_000, scale, 10),
            generations=scaled(10, scale),
            population=pop + pop % 2,
        )
        return replace(base, **{k: v for k, v in overrides.items() if v is not None})


@dataclass
class Exp1Cell:
    family: str
    dataset: int
    p_noise: int
    candidates: dict = field(default_factory=dict)  # variant -> tuple of Candidate
    best: dict = field(default_factory=dict)  # variant -> best MSE
    status: str = "ok"

    @property
    def difference(self) -> float:
        """Best fixed-depth MSE minus best random-depth MSE; positive favors random depth."""
        return self.best["fixed"] - self.best["random"]


def run_exp1(settings: Exp1Settings, log: Callable[[str], None] = lambda s: None) -> list[Exp1Cell]:
    warmup()
    cells = []
    root = RngStream(settings.seed).child("exp1")
    for d in range(settings.n_datasets):
        for p_noise in settings.p_noise:
            _, train, test = friedman_pair(
                settings.seed, d, settings.n, settings.n_test, settings.p_signal, p_noise
            )
            for family in settings.families:
                cell = Exp1Cell(family, d, p_noise)
                try:
                    for variant, flag in (("fixed", False), ("random", True)):
                        learner = replace(family_learner(family, settings.max_depth), random_depth=flag)
                        # both variants replay the same search stream
                        front = nsga2(
                            family_space(family),
                            holdout_evaluator(learner, train, test),
                            settings.generations,
                            settings.population,
                            root.child(family, d, p_noise),
                        )
                        cell.candidates[variant] = front.evaluated
                        cell.best[variant] = min(c.mse for c in front.members) if front.members else float("nan")
                except Exception as exc:  # noqa: BLE001 - record and continue with the next cell
                    cell.status = f"failed: {type(exc).__name__}: {exc}"
                    log(traceback.format_exc())
                log(f"exp1 {family} dataset={d} p_noise={p_noise} {cell.status}")
                cells.append(cell)
    return cells


def write_exp1(cells: Sequence[Exp1Cell], out_dir: Path, manifest: str) -> list[Path]:
    written = []
    for family in sorted({c.family for c in cells}):
        names = family_space(family).names
        fam = [c for c in cells if c.family == family]
        cand_rows, front_rows = [], []
        for cell in fam:
            for variant, cands in cell.candidates.items():
                ranks = _ranks(cands)
                members = {id(c) for c in nondominated_filter(cands).members}
                for c, r in zip(cands, ranks):
                    row = [
                        cell.dataset,
                        cell.p_noise,
                        variant,
                        c.provenance.get("generation", ""),
                        c.provenance.get("index", ""),
                        *[c.params.get(k, "") for k in names],
                        c.mse if c.valid else "",
                        c.runtime if c.valid else "",
                        r,
                        id(c) in members,
                        c.reason,
                    ]
                    cand_rows.append(row)
                    if id(c) in members:
                        front_rows.append(row)
        head = ["dataset", "p_noise", "variant", "generation", "index", *names, "mse", "fit_seconds", "rank", "on_front", "reason"]
        for kind, rows in (("candidates", cand_rows), ("fronts", front_rows)):
            path = out_dir / f"exp1_{family}_{kind}.csv"
            write_table(path, head, rows, manifest)
            written.append(path)

        diff_rows = []
        for cell in fam:
            ok = cell.status == "ok"
            diff_rows.append(
                [
                    cell.dataset,
                    cell.p_noise,
                    cell.best.get("fixed", "") if ok else "",
                    cell.best.get("random", "") if ok else "",
                    cell.difference if ok else "",
                    cell.status,
                ]
            )
        path = out_dir / f"exp1_{family}_differences.csv"
        write_table(
            path,
            ["dataset", "p_noise", "best_mse_fixed", "best_mse_random", "difference", "status"],
            diff_rows,
            manifest,
        )
        written.append(path)
    return written


# --- experiment 2 -------------------------------------------------------------


@dataclass(frozen=True)
class Exp2Settings:
    n_datasets: int = 50
    n: int = 10_000
    n_test: int = 5_000
    k: int = 50
    fixed_trees: int = 200
    p_signal: int = 10
    max_depth: int = 5
    folds: int = 5
    train_fraction: float = 2 / 3
    families: tuple[str, ...] = FAMILIES
    seed: int = 0

    @classmethod
    def at_scale(cls, scale: float, **overrides) -> "Exp2Settings":
        n = scaled(10_000, scale, 20)
        base = cls(n_datasets=scaled(50, scale), n=n, n_test=max(10, n // 2), k=scaled(50, scale))
        return replace(base, **{k: v for k, v in overrides.items() if v is not None})


@dataclass
class Exp2Row:
    family: str
    dataset: int
    mse: dict = field(default_factory=dict)  # variant -> external test MSE
    tuning_seconds: dict = field(default_factory=dict)
    best_cv_mse: dict = field(default_factory=dict)
    best_params: dict = field(default_factory=dict)
    status: str = "ok"

    @property
    def delta_mse(self) -> float:
        """Fixed-depth test MSE minus random-depth test MSE; positive favors random depth."""
        return self.mse["off"] - self.mse["on"]

    @property
    def runtime_ratio(self) -> float:
        return self.tuning_seconds["on"] / self.tuning_seconds["off"]


def exp2_dataset(
    settings: Exp2Settings, family: str, d: int, train: Dataset, test: Dataset
) -> Exp2Row:
    row = Exp2Row(family, d)
    rng = RngStream(settings.seed).child("exp2", family, d)
    space = family_space(family, settings.fixed_trees)
    base = family_learner(family, settings.max_depth, settings.fixed_trees)
    scheme = (settings.folds, settings.train_fraction)
    for variant, flag in (("off", False), ("on", True)):
        learner = replace(base, random_depth=flag)
        search = random_search(space, cv_evaluator(learner, train, scheme), settings.k, rng)
        model = learner.fit(train, search.best.params, rng.child("final").seed())
        row.mse[variant] = mse(model.predict(test.features), test.target)
        row.tuning_seconds[variant] = search.wall_time
        row.best_cv_mse[variant] = search.best.mse
        row.best_params[variant] = search.best.params
        if flag and family == "forest":
            # hybrid: the random-depth search winner refit at full depth
            hybrid = replace(base, random_depth=False).fit(train, search.best.params, rng.child("final").seed())
            row.mse["hybrid"] = mse(hybrid.predict(test.features), test.target)
    return row


def run_exp2(settings: Exp2Settings, log: Callable[[str], None] = lambda s: None) -> list[Exp2Row]:
    warmup()
    rows = []
    for d in range(settings.n_datasets):
        _, train, test = friedman_pair(settings.seed, d, settings.n, settings.n_test, settings.p_signal, 0)
        for family in settings.families:
            try:
                row = exp2_dataset(settings, family, d, train, test)
            except Exception as exc:  # noqa: BLE001 - record and continue
                row = Exp2Row(family, d, status=f"failed: {type(exc).__name__}: {exc}")
                log(traceback.format_exc())
            log(f"exp2 {family} dataset={d} {row.status}")
            rows.append(row)
    return rows


def exp2_summary(rows: Sequence[Exp2Row]) -> list[dict]:
    out = []
    for family in sorted({r.family for r in rows}):
        ok = [r for r in rows if r.family == family and r.status == "ok"]
        if not ok:
            continue
        summary = {
            "family": family,
            "datasets": len(ok),
            "median_runtime_ratio": statistics.median(r.runtime_ratio for r in ok),
            "median_delta_mse": statistics.median(r.delta_mse for r in ok),
            "share_random_better": sum(r.delta_mse > 0 for r in ok) / len(ok),
        }
        if family == "forest":
            summary["median_hybrid_relative_mse"] = statistics.median(r.mse["hybrid"] / r.mse["off"] for r in ok)
        out.append(summary)
    return out


def write_exp2(rows: Sequence[Exp2Row], out_dir: Path, manifest: str) -> list[Path]:
    head = [
        "family",
        "dataset",
        "mse_off",
        "mse_on",
        "mse_hybrid",
        "delta_mse",
        "tuning_seconds_off",
        "tuning_seconds_on",
        "delta_seconds",
        "runtime_ratio",
        "status",
    ]
    table = []
    for r in rows:
        ok = r.status == "ok"
        table.append(
            [
                r.family,
                r.dataset,
                r.mse.get("off", ""),
                r.mse.get("on", ""),
                r.mse.get("hybrid", ""),
                r.delta_mse if ok else "",
                r.tuning_seconds.get("off", ""),
                r.tuning_seconds.get("on", ""),
                r.tuning_seconds["off"] - r.tuning_seconds["on"] if ok else "",
                r.runtime_ratio if ok else "",
                r.status,
            ]
        )
    per = out_dir / "exp2_datasets.csv"
    write_table(per, head, table, manifest)
    summ = out_dir / "exp2_summary.csv"
    s_head = [
        "family",
        "datasets",
        "median_runtime_ratio",
        "median_delta_mse",
        "share_random_better",
        "median_hybrid_relative_mse",
    ]
    s_rows = [[s.get(k, "") for k in s_head] for s in exp2_summary(rows)]
    write_table(summ, s_head, s_rows, manifest)
    return [per, summ]
