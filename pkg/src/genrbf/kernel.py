"""The genRBF kernel between degenerate-Gaussian representations.

For representations ``N(m_a, S_a)`` and ``N(m_b, S_b)`` (``S`` possibly
singular) and width ``gamma``::

    K = Z * exp(-1/2 (m_a - m_b)ᵀ Ŝ⁻¹ (m_a - m_b)),    Ŝ = I/(2γ) + S_a + S_b
    Z = det(I + 4γ S_a)^¼ det(I + 4γ S_b)^¼ / det(I + 2γ (S_a + S_b))^½

which is the L2 inner product of the two Gaussian-smoothed, unit-normalised
densities. For two complete points it is exactly ``exp(-γ |x - y|²)``.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg

from . import _backend
from .representation import PointRepresentation, ambient_cov

GRAM_MAGIC = b"GRBF"
_LOG2PI = math.log(2.0 * math.pi)


class KernelError(ArithmeticError):
    pass


@dataclass(frozen=True)
class KernelParams:
    gamma: float

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be a positive finite number, got {self.gamma}")

    @classmethod
    def from_sigma(cls, sigma: float) -> "KernelParams":
        return cls(1.0 / (4.0 * sigma * sigma))

    @property
    def sigma2(self) -> float:
        """Variance of the smoothing Gaussian, 1/(4γ)."""
        return 1.0 / (4.0 * self.gamma)


def _as_params(params) -> KernelParams:
    return params if isinstance(params, KernelParams) else KernelParams(float(params))


def _logdet_spd(A: np.ndarray) -> float:
    if A.shape[0] == 0:
        return 0.0
    L = np.linalg.cholesky(A)
    return 2.0 * float(np.log(np.diag(L)).sum())


def _factor_logdet(U: np.ndarray, c: float) -> float:
    """log det(I + c U Uᵀ) from the singular values of ``U``.

    Avoids forming ``UᵀU``: when ``U`` has dependent columns (e.g. two equal
    factors side by side) the Gram matrix carries round-off of order
    ``eps * c * ||U||²`` into its null directions, while singular values only
    pick up ``(eps * ||U||)²``.
    """
    if U.shape[1] == 0:
        return 0.0
    sv = linalg.svdvals(U, check_finite=False)
    return float(np.log1p(c * sv * sv).sum())


def lowrank_logdet(rep: PointRepresentation, c: float) -> float:
    """log det(I_N + c S) computed as log det(I_n + c Σ_V)."""
    n = rep.rank
    return _logdet_spd(np.eye(n) + c * rep.small_cov)


def gaussian_l2_inner(m1, S1, m2, S2) -> float:
    """∫ N(m1, S1) N(m2, S2) = N(m1 - m2, S1 + S2) evaluated at 0."""
    d = np.atleast_1d(np.asarray(m1, dtype=float) - np.asarray(m2, dtype=float))
    S = np.atleast_2d(np.asarray(S1, dtype=float) + np.asarray(S2, dtype=float))
    try:
        c = linalg.cho_factor(S, lower=True)
    except linalg.LinAlgError as exc:
        raise ValueError("S1 + S2 is not positive definite") from exc
    quad = float(d @ linalg.cho_solve(c, d))
    logdet = 2.0 * float(np.log(np.diag(c[0])).sum())
    return math.exp(-0.5 * (d.shape[0] * _LOG2PI + logdet + quad))


def gaussian_l2_norm(S) -> float:
    """L2 norm of a Gaussian density with covariance ``S`` (mean-independent)."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    return math.sqrt(gaussian_l2_inner(np.zeros(S.shape[0]), S, np.zeros(S.shape[0]), S))


def embed_regularize(rep: PointRepresentation, params) -> tuple[np.ndarray, np.ndarray]:
    """Convolve the representation with N(0, σ² I), σ² = 1/(4γ)."""
    params = _as_params(params)
    cov = ambient_cov(rep) + params.sigma2 * np.eye(rep.dim)
    return rep.mean.copy(), cov


def _check(name: str, value: float) -> float:
    if not math.isfinite(value):
        raise KernelError(f"non-finite {name}: {value}")
    return value


def kernel_value(a: PointRepresentation, b: PointRepresentation, params) -> float:
    """genRBF kernel between two representations.

    Determinants use singular values of the factored covariances; the
    quadratic form is a dense solve in the ambient dimension.
    """
    gamma = _as_params(params).gamma
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    d = a.mean - b.mean
    if a.rank == 0 and b.rank == 0:
        return math.exp(-gamma * float(sum(t * t for t in d)))

    Ua, Ub = a.factor(), b.factor()
    U = np.concatenate([Ua, Ub], axis=1)
    ld_a = _check("log det(I + 4γ S_a)", _factor_logdet(Ua, 4.0 * gamma))
    ld_b = _check("log det(I + 4γ S_b)", _factor_logdet(Ub, 4.0 * gamma))
    ld_ab = _check("log det(I + 2γ (S_a + S_b))", _factor_logdet(U, 2.0 * gamma))
    S_hat = (0.5 / gamma) * np.eye(a.dim) + U @ U.T
    quad = _check("quadratic form", float(d @ linalg.cho_solve(
        linalg.cho_factor(S_hat, lower=True), d)))
    return math.exp(0.25 * (ld_a + ld_b) - 0.5 * ld_ab - 0.5 * quad)


class PackedReps:
    """Representations laid out contiguously for the compiled core."""

    def __init__(self, reps: Sequence[PointRepresentation]):
        reps = list(reps)
        if not reps:
            raise ValueError("no representations given")
        N = reps[0].dim
        if any(r.dim != N for r in reps):
            raise ValueError("representations have different dimensions")
        self.reps = reps
        self.dim = N
        self.means = np.ascontiguousarray(np.stack([r.mean for r in reps]))
        ranks = np.array([r.rank for r in reps], dtype=np.int64)
        self.offsets = np.zeros(len(reps) + 1, dtype=np.int64)
        np.cumsum(ranks, out=self.offsets[1:])
        blocks = [r.factor().T for r in reps if r.rank]
        self.factors = (np.ascontiguousarray(np.concatenate(blocks, axis=0))
                        if blocks else np.zeros((0, N)))
        # eigenvalues of each Σ_V so log det(I + cΣ_V) is cheap for any c
        self._eigs = [np.linalg.eigvalsh(r.small_cov) if r.rank else np.zeros(0)
                      for r in reps]
        self._logdet_cache: dict[float, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.reps)

    def logdets(self, gamma: float) -> np.ndarray:
        """log det(I + 4γ Σ_V) for every point."""
        if gamma not in self._logdet_cache:
            c = 4.0 * gamma
            self._logdet_cache[gamma] = np.array(
                [float(np.log1p(c * np.maximum(w, 0.0)).sum()) for w in self._eigs])
        return self._logdet_cache[gamma]


def _threads(n_threads):
    if n_threads is None:
        return os.cpu_count() or 1
    return max(1, int(n_threads))


def _pack(reps) -> PackedReps:
    return reps if isinstance(reps, PackedReps) else PackedReps(reps)


def _raise_bad_entries(K, rows: PackedReps, cols: PackedReps, gamma):
    bad = np.argwhere(~np.isfinite(K))
    if bad.size:
        i, j = (int(t) for t in bad[0])
        kernel_value(rows.reps[i], cols.reps[j], gamma)
        raise KernelError(f"kernel evaluation failed at entry ({i}, {j})")


def gram(reps, params, n_threads=None, core=None) -> np.ndarray:
    """Symmetric Gram matrix with unit diagonal."""
    gamma = _as_params(params).gamma
    P = _pack(reps)
    core = core or _backend.core
    K = core.gram_sym(P.means, P.factors, P.offsets, P.logdets(gamma), gamma,
                      _threads(n_threads))
    _raise_bad_entries(K, P, P, gamma)
    np.fill_diagonal(K, 1.0)
    return K


def gram_cross(rows, cols, params, n_threads=None, core=None) -> np.ndarray:
    """Kernel values between every row representation and every column one."""
    gamma = _as_params(params).gamma
    A, B = _pack(rows), _pack(cols)
    if A.dim != B.dim:
        raise ValueError(f"dimension mismatch: {A.dim} vs {B.dim}")
    core = core or _backend.core
    K = core.gram_rect(A.means, A.factors, A.offsets, A.logdets(gamma),
                       B.means, B.factors, B.offsets, B.logdets(gamma), gamma,
                       _threads(n_threads))
    _raise_bad_entries(K, A, B, gamma)
    return K


def rbf(X, Y, gamma: float) -> np.ndarray:
    """Classical RBF kernel matrix exp(-γ |x - y|²)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    sq = ((X[:, None, :] - Y[None, :, :]) ** 2).sum(axis=-1)
    return np.exp(-gamma * sq)


def write_gram_csv(K: np.ndarray, path) -> None:
    np.savetxt(path, K, delimiter=",", fmt="%.17g")


def read_gram_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))


def write_gram_binary(K: np.ndarray, path) -> None:
    """``GRBF`` magic, u32 size, then the upper triangle (row-major) as f64 LE."""
    K = np.asarray(K, dtype=float)
    M = K.shape[0]
    iu = np.triu_indices(M)
    with open(path, "wb") as fh:
        fh.write(GRAM_MAGIC)
        fh.write(struct.pack("<I", M))
        fh.write(K[iu].astype("<f8").tobytes())


def read_gram_binary(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != GRAM_MAGIC:
        raise ValueError("not a GRBF gram file")
    (M,) = struct.unpack("<I", raw[4:8])
    n = M * (M + 1) // 2
    vals = np.frombuffer(raw, dtype="<f8", count=n, offset=8)
    if len(raw) != 8 + 8 * n:
        raise ValueError("truncated or oversized GRBF gram file")
    K = np.empty((M, M))
    iu = np.triu_indices(M)
    K[iu] = vals
    K.T[iu] = vals
    return K
