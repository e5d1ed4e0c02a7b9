"""Injection of MCAR, MAR and NMAR missingness into complete datasets.

MAR/NMAR removal: ``N`` anchor rows ``x_1..x_N`` are drawn; attribute ``i``
of every non-anchor row ``x`` is removed with probability
``exp(-t * ||x - x_i||_S)`` (unsquared Mahalanobis norm under the sample
covariance ``S``). For NMAR the distance uses a hidden half of the features,
which is then dropped from the output.

The rate ``t`` is found by bisection on ``log t`` over ``[1e-4, 1e4]`` so the
*realized* fraction of removed cells matches the target. Per-cell uniforms
are drawn once from a counter-based generator (Philox, counter = row-major
cell index), so the mask is monotone in ``t`` and every cell is still removed
with exactly the stated probability for the chosen ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .data import Dataset

MECHANISMS = ("mcar", "mar", "nmar")
T_RANGE = (1e-4, 1e4)
BISECTION_STEPS = 60


@dataclass(frozen=True)
class MissingnessSpec:
    mechanism: str
    p: float
    seed: int = 0
    anchor_count: int | None = None

    def __post_init__(self):
        mech = self.mechanism.lower()
        if mech not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}; choose from {MECHANISMS}")
        object.__setattr__(self, "mechanism", mech)
        _check_fraction(self.p)


@dataclass
class Injection:
    data: Dataset
    manifest: dict = field(default_factory=dict)


def _check_fraction(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise ValueError(f"missing fraction must lie in (0, 1), got {p}")


def _require_complete(data: Dataset) -> None:
    if not data.is_complete:
        raise ValueError("missingness can only be injected into a complete dataset")


def _streams(seed: int):
    """Independent generators for anchors/feature split and per-cell uniforms."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    sel, cells = ss.spawn(2)
    return np.random.Generator(np.random.PCG64(sel)), np.random.Generator(np.random.Philox(cells))


def sample_covariance(X: np.ndarray) -> np.ndarray:
    """Sample covariance, ridge-regularized if singular."""
    X = np.asarray(X, dtype=float)
    n, N = X.shape
    S = np.atleast_2d(np.cov(X, rowvar=False)) if n > 1 else np.zeros((N, N))
    try:
        np.linalg.cholesky(S)
        return S
    except np.linalg.LinAlgError:
        tr = float(np.trace(S))
        ridge = 1e-6 * tr / N if tr > 0 else 1e-6
        return S + ridge * np.eye(N)


def mahalanobis_to_anchors(X: np.ndarray, anchors: np.ndarray, S: np.ndarray) -> np.ndarray:
    """(M, len(anchors)) matrix of ||X[r] - X[anchors[i]]||_S."""
    L = np.linalg.cholesky(S)
    Z = linalg.solve_triangular(L, X.T, lower=True).T
    diff = Z[:, None, :] - Z[anchors][None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def removal_probabilities(dist: np.ndarray, t: float) -> np.ndarray:
    return np.exp(-t * dist)


def calibrate_rate(dist: np.ndarray, eligible: np.ndarray, uniforms: np.ndarray,
                   p: float) -> float:
    """Bisection on log t so the realized removed fraction is closest to ``p``."""
    total = dist.size

    def frac(t):
        return float((eligible & (uniforms < np.exp(-t * dist))).sum()) / total

    lo, hi = math.log(T_RANGE[0]), math.log(T_RANGE[1])
    if frac(T_RANGE[0]) <= p:
        return T_RANGE[0]
    if frac(T_RANGE[1]) >= p:
        return T_RANGE[1]
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if frac(math.exp(mid)) > p:
            lo = mid
        else:
            hi = mid
    t_lo, t_hi = math.exp(lo), math.exp(hi)
    return t_lo if abs(frac(t_lo) - p) <= abs(frac(t_hi) - p) else t_hi


def inject_mcar_mask(shape, p: float, seed: int) -> np.ndarray:
    _check_fraction(p)
    M, N = shape
    count = int(math.floor(p * M * N + 0.5))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)))
    cells = rng.choice(M * N, size=count, replace=False)
    mask = np.zeros(M * N, dtype=bool)
    mask[cells] = True
    return mask.reshape(M, N)


def inject_mcar(data: Dataset, p: float, seed: int = 0, *, info: bool = False):
    """Remove exactly ``round(p*M*N)`` cells chosen uniformly at random."""
    _require_complete(data)
    mask = inject_mcar_mask(data.values.shape, p, seed)
    out = data.with_values(data.values, mask)
    if info:
        return Injection(out, {"mechanism": "mcar", "p": p, "seed": int(seed),
                               "t_calibrated": None, "anchor_indices": [],
                               "hidden_features": [], "visible_features": list(range(data.n_features)),
                               "realized_fraction": float(mask.mean())})
    return out


def _draw_anchors(M: int, n_cols: int, anchor_count: int | None, rng) -> np.ndarray:
    n_anchor = n_cols if anchor_count is None else int(anchor_count)
    if n_anchor < n_cols:
        raise ValueError("need at least one anchor per attribute")
    if n_anchor > M:
        raise ValueError(f"need at least {n_anchor} rows to draw anchors, have {M}")
    return rng.choice(M, size=n_anchor, replace=False)


def inject_mar(data: Dataset, p: float, seed: int = 0, anchor_count: int | None = None,
               *, info: bool = False):
    """Remove attribute i of non-anchor rows with prob exp(-t ||x - x_i||_S)."""
    _require_complete(data)
    _check_fraction(p)
    X = data.values
    M, N = X.shape
    rng_sel, rng_cells = _streams(seed)
    anchors = _draw_anchors(M, N, anchor_count, rng_sel)
    uniforms = rng_cells.random((M, N))
    S = sample_covariance(X)
    dist = mahalanobis_to_anchors(X, anchors[:N], S)
    eligible = np.ones((M, N), dtype=bool)
    eligible[anchors] = False
    t = calibrate_rate(dist, eligible, uniforms, p)
    mask = eligible & (uniforms < removal_probabilities(dist, t))
    out = data.with_values(X, mask)
    if not info:
        return out
    expected = float((eligible * removal_probabilities(dist, t)).mean())
    return Injection(out, {"mechanism": "mar", "p": p, "seed": int(seed), "t_calibrated": t,
                           "anchor_indices": anchors.tolist(), "hidden_features": [],
                           "visible_features": list(range(N)),
                           "realized_fraction": float(mask.mean()),
                           "expected_fraction": expected,
                           "norm": "mahalanobis (unsquared)"})


def split_features(N: int, rng) -> tuple[list[int], list[int]]:
    perm = rng.permutation(N)
    n_vis = (N + 1) // 2
    return sorted(perm[:n_vis].tolist()), sorted(perm[n_vis:].tolist())


def inject_nmar(data: Dataset, p: float, seed: int = 0, anchor_count: int | None = None,
                *, info: bool = False):
    """Removal driven by a hidden half of the features, which is then dropped."""
    _require_complete(data)
    _check_fraction(p)
    X = data.values
    M, N = X.shape
    if N < 2:
        raise ValueError("NMAR needs at least two features")
    rng_sel, rng_cells = _streams(seed)
    visible, hidden = split_features(N, rng_sel)
    anchors = _draw_anchors(M, N, anchor_count, rng_sel)
    uniforms = rng_cells.random((M, N))[:, visible]
    Xh = X[:, hidden]
    S = sample_covariance(Xh)
    dist = mahalanobis_to_anchors(Xh, anchors[visible], S)
    eligible = np.ones((M, len(visible)), dtype=bool)
    eligible[anchors] = False
    t = calibrate_rate(dist, eligible, uniforms, p)
    mask = eligible & (uniforms < removal_probabilities(dist, t))
    out = data.select_features(visible).with_values(X[:, visible], mask)
    if not info:
        return out
    expected = float((eligible * removal_probabilities(dist, t)).mean())
    return Injection(out, {"mechanism": "nmar", "p": p, "seed": int(seed), "t_calibrated": t,
                           "anchor_indices": anchors.tolist(), "hidden_features": hidden,
                           "visible_features": visible,
                           "realized_fraction": float(mask.mean()),
                           "expected_fraction": expected,
                           "norm": "mahalanobis (unsquared)"})


def inject(data: Dataset, mechanism: str, p: float, seed: int = 0,
           anchor_count: int | None = None) -> Injection:
    spec = MissingnessSpec(mechanism, p, seed, anchor_count)
    if spec.mechanism == "mcar":
        return inject_mcar(data, p, seed, info=True)
    if spec.mechanism == "mar":
        return inject_mar(data, p, seed, anchor_count, info=True)
    return inject_nmar(data, p, seed, anchor_count, info=True)
