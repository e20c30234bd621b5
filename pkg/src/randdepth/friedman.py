"""Random Gaussian-bump regression targets with heteroscedastic noise.

A target function is a sum of ``p_signal`` terms
``a_j * exp(-0.5 * (z_j - mu_j)' V_j (z_j - mu_j))`` where ``z_j`` picks a
random subset of the signal columns. Features are i.i.d. standard normal;
the noise variance of row ``i`` is ``|F(x_i) - median F|``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ContractError, Dataset, RngStream, as_generator


@dataclass(frozen=True)
class BumpTerm:
    coefficient: float
    feature_indices: np.ndarray
    center: np.ndarray
    precision: np.ndarray
    raw_order: int

    def __post_init__(self):
        for name, dtype in (("feature_indices", np.int64), ("center", np.float64), ("precision", np.float64)):
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        k = self.feature_indices.shape[0]
        if k < 1 or self.center.shape != (k,) or self.precision.shape != (k, k):
            raise ContractError("inconsistent term dimensions")


@dataclass(frozen=True)
class FriedmanSpec:
    p_signal: int
    p_noise: int
    terms: tuple[BumpTerm, ...]
    seed: int = -1

    @property
    def n_features(self) -> int:
        return self.p_signal + self.p_noise


@dataclass(frozen=True)
class GeneratedData:
    dataset: Dataset
    signal: np.ndarray
    median_signal: float
    spec_seed: int
    data_seed: int


def haar_orthogonal(gen: np.random.Generator, k: int) -> np.ndarray:
    """Uniformly random orthonormal k x k matrix (sign-fixed QR of a Gaussian)."""
    q, r = np.linalg.qr(gen.standard_normal((k, k)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def interaction_order(gen: np.random.Generator) -> int:
    """``floor(1.5 + r)`` with ``r ~ Exp(rate 2)``."""
    return int(math.floor(1.5 + gen.exponential(scale=0.5)))


def sample_spec(p_signal: int, p_noise: int, rng: RngStream | np.random.Generator) -> FriedmanSpec:
    if p_signal < 1:
        raise ContractError(f"p_signal must be >= 1, got {p_signal}")
    if p_noise < 0:
        raise ContractError(f"p_noise must be >= 0, got {p_noise}")
    gen = as_generator(rng)
    terms = []
    for _ in range(p_signal):
        a = gen.uniform(-1.0, 1.0)
        raw = interaction_order(gen)
        k = min(max(raw, 1), p_signal)
        idx = gen.permutation(p_signal)[:k]
        mu = gen.standard_normal(k)
        d = gen.uniform(0.1, 2.0, size=k) ** 2
        u = haar_orthogonal(gen, k)
        v = (u * d) @ u.T
        terms.append(BumpTerm(a, idx, mu, 0.5 * (v + v.T), raw))
    seed = rng.master_seed if isinstance(rng, RngStream) else -1
    return FriedmanSpec(int(p_signal), int(p_noise), tuple(terms), seed)


def evaluate_signal_batch(spec: FriedmanSpec, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.n_features:
        raise ContractError(f"expected {spec.n_features} columns, got shape {X.shape}")
    out = np.zeros(X.shape[0])
    for t in spec.terms:
        z = X[:, t.feature_indices] - t.center
        q = np.einsum("ij,jk,ik->i", z, t.precision, z)
        out += t.coefficient * np.exp(-0.5 * q)
    return out


def evaluate_signal(spec: FriedmanSpec, x) -> float:
    return float(evaluate_signal_batch(spec, np.asarray(x, dtype=np.float64)[None, :])[0])


def draw_noise(signal: np.ndarray, median: float, rng: RngStream | np.random.Generator) -> np.ndarray:
    """Normal noise with variance ``|signal - median|`` per entry."""
    gen = as_generator(rng)
    return gen.normal(0.0, 1.0, size=np.shape(signal)) * np.sqrt(np.abs(np.asarray(signal) - median))


def generate(spec: FriedmanSpec, n: int, rng: RngStream) -> GeneratedData:
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    gen = as_generator(rng)
    X = gen.standard_normal((n, spec.n_features))
    signal = evaluate_signal_batch(spec, X)
    med = float(np.median(signal))
    y = signal + draw_noise(signal, med, gen)
    names = tuple(f"x{j + 1}" for j in range(spec.n_features))
    seed = rng.master_seed if isinstance(rng, RngStream) else -1
    return GeneratedData(Dataset(X, y, names), signal, med, spec.seed, seed)


def make_friedman(
    n: int, p_signal: int = 10, p_noise: int = 0, spec_seed: int = 0, data_seed: int = 1
) -> tuple[FriedmanSpec, GeneratedData]:
    """Draw a spec and one dataset from ``(spec_seed, data_seed)``."""
    spec = sample_spec(p_signal, p_noise, RngStream(spec_seed).child("friedman", "spec"))
    return spec, generate(spec, n, RngStream(data_seed).child("friedman", "data"))


def spec_to_dict(spec: FriedmanSpec) -> dict:
    return {
        "p_signal": spec.p_signal,
        "p_noise": spec.p_noise,
        "seed": spec.seed,
        "terms": [
            {
                "coefficient": t.coefficient,
                "feature_indices": t.feature_indices.tolist(),
                "center": t.center.tolist(),
                "precision": t.precision.tolist(),
                "raw_order": t.raw_order,
            }
            for t in spec.terms
        ],
    }


def spec_from_dict(d: dict) -> FriedmanSpec:
    terms = tuple(
        BumpTerm(t["coefficient"], t["feature_indices"], t["center"], t["precision"], t["raw_order"])
        for t in d["terms"]
    )
    return FriedmanSpec(int(d["p_signal"]), int(d["p_noise"]), terms, int(d.get("seed", -1)))


def write_sidecar(path: str | Path, spec: FriedmanSpec, data: GeneratedData) -> None:
    """Everything needed to replay a generated dataset."""
    payload = {
        "spec_seed": data.spec_seed,
        "data_seed": data.data_seed,
        "n": data.dataset.n_rows,
        "median_signal": data.median_signal,
        "spec": spec_to_dict(spec),
        "signal": data.signal.tolist(),
    }
    Path(path).write_text(json.dumps(payload, indent=1))
