"""``randdepth`` command line: gen, fit, predict, exp1, exp2, selftest."""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .boost import BoostConfig, fit_adaboost, fit_boost
from .cart import TreeConfig, best_split, count_splits, grow_tree
from .core import ContractError, Dataset, RngStream, mse, read_csv, read_features_csv, write_csv
from .experiments import Exp1Settings, Exp2Settings, exp2_summary, run_exp1, run_exp2, write_exp1, write_exp2
from .forest import ForestConfig, expected_relative_splits, fit_forest
from .friedman import make_friedman, write_sidecar
from .io import load_model, save_model

LEARNERS = ("cart", "bagging", "rf", "r2f", "mart", "rb", "adaboost")
FOREST_LEARNERS = ("bagging", "rf", "r2f")
BOOST_LEARNERS = ("mart", "rb")


class Manifest:
    def __init__(self, command: str, args: argparse.Namespace, seed: int):
        self.data = {
            "command": command,
            "flags": {k: v for k, v in vars(args).items() if k != "func"},
            "master_seed": seed,
            "started": _now(),
            "version": __version__,
            "outputs": [],
        }

    def add(self, *paths) -> None:
        self.data["outputs"] += [str(p) for p in paths]

    def write(self, path: Path) -> Path:
        self.data["finished"] = _now()
        path.write_text(json.dumps(self.data, indent=1, default=str))
        return path


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat()


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _yes_no(v: str) -> bool:
    if v.lower() in ("yes", "true", "1"):
        return True
    if v.lower() in ("no", "false", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected yes or no, got {v!r}")


def _int_list(v: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in v.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {v!r}") from None


def _scale(v: str) -> float:
    s = float(v)
    if not 0.0 < s <= 1.0:
        raise argparse.ArgumentTypeError(f"scale must lie in (0, 1], got {v}")
    return s


# --- commands -------------------------------------------------------------------


def cmd_gen(args) -> int:
    out = Path(args.out)
    man = Manifest("gen", args, args.data_seed)
    spec, data = make_friedman(args.n, args.p_signal, args.p_noise, args.spec_seed, args.data_seed)
    write_csv(data.dataset, out)
    sidecar = out.with_name(out.name + ".spec.json")
    write_sidecar(sidecar, spec, data)
    man.add(out, sidecar)
    man.write(_manifest_path(out))
    return 0


def _tree_config(args, boosting: bool) -> TreeConfig:
    depth = args.max_depth if args.max_depth is not None else (1 if args.learner == "adaboost" else 3 if boosting else 5)
    leaf = args.min_leaf if args.min_leaf is not None else (1 if boosting or args.learner == "adaboost" else 5)
    kappa = args.feature_fraction
    if kappa is None:
        kappa = 1 / 3 if args.learner in ("rf", "r2f") else 1.0
    return TreeConfig(depth, leaf, kappa)


def cmd_fit(args) -> int:
    data = read_csv(args.data)
    learner = args.learner
    boosting = learner in BOOST_LEARNERS
    tree = _tree_config(args, boosting)
    if learner == "cart":
        model = grow_tree(data, tree, tree.max_depth, RngStream(args.seed).child("cart"))
        splits, seconds = count_splits(model), float("nan")
        pred = model.predict(data.features)
    elif learner in FOREST_LEARNERS:
        if learner == "bagging":
            tree = TreeConfig(tree.max_depth, tree.min_leaf_size, 1.0)
        cfg = ForestConfig(
            n_trees=args.n_trees,
            tree=tree,
            obs_fraction=args.obs_fraction,
            with_replacement=args.replacement,
            random_depth=learner == "r2f",
            seed=args.seed,
        )
        model = fit_forest(data, cfg, n_jobs=args.jobs)
        splits, seconds = model.fit_stats.total_splits, model.fit_stats.wall_time
        pred = model.predict(data.features)
    elif boosting:
        cfg = BoostConfig(
            n_iterations=args.n_iterations,
            learning_rate=args.learning_rate,
            obs_fraction=args.obs_fraction,
            tree=tree,
            random_depth=learner == "rb",
            seed=args.seed,
        )
        model = fit_boost(data, cfg)
        splits, seconds = model.fit_stats.total_splits, model.fit_stats.wall_time
        pred = model.predict(data.features)
    else:
        model = fit_adaboost(data, args.n_iterations, tree)
        splits, seconds = sum(count_splits(t) for t, _ in model.stages), float("nan")
        pred = model.predict(data.features).astype(np.float64)

    out = Path(args.model)
    man = Manifest("fit", args, args.seed)
    save_model(model, out, learner=learner, n_features=data.n_features, column_names=list(data.column_names))
    report = {"learner": learner, "train_mse": mse(pred, data.target), "total_splits": splits}
    report["fit_seconds"] = None if math.isnan(seconds) else seconds
    print(json.dumps(report))
    man.data["report"] = report
    man.add(out)
    man.write(_manifest_path(out))
    return 0


def cmd_predict(args) -> int:
    model, meta = load_model(args.model)
    X = read_features_csv(args.data, int(meta["n_features"]))
    pred = model.predict(X)
    out = Path(args.out)
    man = Manifest("predict", args, -1)
    mpath = _manifest_path(out)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["prediction", "manifest"])
        for v in pred:
            w.writerow([format(float(v), ".17g"), mpath.name])
    man.add(out)
    man.write(mpath)
    return 0


def _experiment(args, name: str, run, write, settings) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest(name, args, settings.seed)
    man.data["settings"] = settings.__dict__
    log = (lambda s: print(s, file=sys.stderr)) if args.verbose else (lambda s: None)
    results = run(settings, log)
    mpath = out / f"{name}_manifest.json"
    man.add(*write(results, out, mpath.name))
    if name == "exp2":
        man.data["summary"] = exp2_summary(results)
    man.write(mpath)
    return 0


def cmd_exp1(args) -> int:
    settings = Exp1Settings.at_scale(
        args.scale,
        n_datasets=args.datasets,
        p_noise=args.p_noise,
        n=args.n,
        n_test=args.n // 2 if args.n else None,
        generations=args.generations,
        population=args.population,
        max_depth=args.max_depth,
        families=tuple(args.families.split(",")),
        seed=args.seed,
    )
    if settings.population < 4 or settings.population % 2:
        raise ContractError("population must be even and >= 4")
    return _experiment(args, "exp1", run_exp1, write_exp1, settings)


def cmd_exp2(args) -> int:
    settings = Exp2Settings.at_scale(
        args.scale,
        n_datasets=args.datasets,
        n=args.n,
        n_test=args.n // 2 if args.n else None,
        k=args.k,
        fixed_trees=args.fixed_trees,
        max_depth=args.max_depth,
        families=tuple(args.families.split(",")),
        seed=args.seed,
    )
    return _experiment(args, "exp2", run_exp2, write_exp2, settings)


def _brute_split(X, y, min_leaf):
    best = None
    base = ((y - y.mean()) ** 2).sum()
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        for lo, hi in zip(vals[:-1], vals[1:]):
            s = (lo + hi) / 2
            m = X[:, j] <= s
            if m.sum() < min_leaf or (~m).sum() < min_leaf:
                continue
            sse = ((y[m] - y[m].mean()) ** 2).sum() + ((y[~m] - y[~m].mean()) ** 2).sum()
            if sse < base and (best is None or sse < best[2]):
                best = (j, s, sse)
    return best


def cmd_selftest(args) -> int:
    """Fast internal consistency checks; exit 1 if any fails."""
    checks = []
    checks.append(("split ratio closed form", [expected_relative_splits(d) for d in (2, 3, 4)] == [0.75, 7 / 12, 0.46875]))

    gen = RngStream(args.seed).child("selftest").generator()
    agree = True
    for _ in range(30):
        n, p = int(gen.integers(2, 20)), int(gen.integers(1, 4))
        X = np.round(gen.normal(size=(n, p)), 1)
        y = gen.normal(size=n)
        got = best_split(Dataset(X, y), range(p), 1)
        want = _brute_split(X, y, 1)
        if (got is None) != (want is None):
            agree = False
        elif got is not None and (got.feature_index, got.threshold) != want[:2]:
            agree = False
    checks.append(("best split matches brute force", agree))

    X = gen.normal(size=(300, 4))
    data = Dataset(X, X[:, 0] + gen.normal(size=300))
    forest = fit_forest(data, ForestConfig(n_trees=10, tree=TreeConfig(4, 2, 0.5), seed=args.seed))
    per_tree = np.mean([t.predict(X[:20]) for t in forest.trees], axis=0)
    checks.append(("forest mean identity", bool(np.max(np.abs(per_tree - forest.predict(X[:20]))) <= 1e-12)))
    checks.append(("adaboost alpha", math.log(3.0) == math.log((1 - 0.25) / 0.25)))

    failed = 0
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        failed += not ok
    return 1 if failed else 0


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="randdepth", description="Tree ensembles with random depth, data generator and tuning experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic dataset and its sidecar")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--p-signal", type=int, default=10)
    g.add_argument("--p-noise", type=int, default=0)
    g.add_argument("--spec-seed", type=int, default=0)
    g.add_argument("--data-seed", type=int, default=1)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit", help="fit a model on a CSV dataset")
    f.add_argument("--learner", choices=LEARNERS, required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--model", required=True, help="output model file (JSON)")
    f.add_argument("--n-trees", type=int, default=100)
    f.add_argument("--n-iterations", type=int, default=100, help="boosting stages or AdaBoost rounds")
    f.add_argument("--learning-rate", type=float, default=0.1)
    f.add_argument("--max-depth", type=int)
    f.add_argument("--min-leaf", type=int)
    f.add_argument("--feature-fraction", type=float)
    f.add_argument("--obs-fraction", type=float, default=1.0)
    f.add_argument("--replacement", type=_yes_no, default=True, help="forest row sampling with replacement (yes/no)")
    f.add_argument("--jobs", type=int, default=1)
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="predict rows of a CSV file")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    for name, func in (("exp1", cmd_exp1), ("exp2", cmd_exp2)):
        e = sub.add_parser(name, help=f"run experiment {name[-1]}")
        e.add_argument("--scale", type=_scale, default=0.1, help="shrinks n, dataset count and budgets")
        e.add_argument("--datasets", type=int)
        e.add_argument("--n", type=int)
        e.add_argument("--max-depth", type=int)
        e.add_argument("--families", default="boost,forest")
        e.add_argument("--seed", type=int, default=0)
        e.add_argument("--out", required=True, help="output directory")
        e.add_argument("--verbose", action="store_true")
        if name == "exp1":
            e.add_argument("--p-noise", type=_int_list)
            e.add_argument("--generations", type=int)
            e.add_argument("--population", type=int)
        else:
            e.add_argument("--k", type=int, help="random search draws per dataset")
            e.add_argument("--fixed-trees", type=int, help="trees or boosting stages (default 200)")
        e.set_defaults(func=func)

    s = sub.add_parser("selftest", help="quick internal checks")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "families", None):
        bad = set(args.families.split(",")) - {"boost", "forest"}
        if bad:
            print(f"randdepth: unknown families {sorted(bad)}", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except (ContractError, OSError, KeyError) as exc:
        print(f"randdepth {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
