"""Incomplete points as affine subspaces ``x + V`` and their affine images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .data import IncompletePoint

RANK_RTOL = 1e-10
EIG_FLOOR = 1e-12


@dataclass(frozen=True)
class MissingSubspacePoint:
    """Base point ``base`` plus an (N, n) orthonormal ``basis`` of V."""

    base: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        base = np.array(self.base, dtype=float).reshape(-1)
        basis = np.array(self.basis, dtype=float).reshape(base.shape[0], -1)
        base.setflags(write=False)
        basis.setflags(write=False)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self) -> int:
        return self.base.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def is_canonical(self) -> bool:
        """True if every basis column is a signed canonical unit vector."""
        b = self.basis
        return bool(np.all((b == 0) | (np.abs(b) == 1)) and np.all(np.abs(b).sum(axis=0) == 1))


def from_incomplete(point: IncompletePoint) -> MissingSubspacePoint:
    n = point.dim
    basis = np.eye(n)[:, list(point.missing)]
    return MissingSubspacePoint(point.values, basis)


def from_mask(values: np.ndarray, missing: np.ndarray) -> MissingSubspacePoint:
    values = np.where(missing, 0.0, values)
    return MissingSubspacePoint(values, np.eye(values.shape[0])[:, np.flatnonzero(missing)])


def orthonormalize(M: np.ndarray) -> np.ndarray:
    """Orthonormal basis for the column span of ``M`` (must have full column rank)."""
    if M.shape[1] == 0:
        return M.copy()
    Q, R, _ = linalg.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[-1] <= RANK_RTOL * max(diag[0], np.finfo(float).tiny):
        raise np.linalg.LinAlgError(
            "mapped basis is rank deficient; the affine map must be invertible on V")
    return Q


def transform_affine(point: MissingSubspacePoint, A, b) -> MissingSubspacePoint:
    """Image of ``x + V`` under ``w -> A w + b``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.shape != (point.dim, point.dim) or b.shape != (point.dim,):
        raise ValueError("affine map dimensions do not match the point")
    return MissingSubspacePoint(A @ point.base + b, orthonormalize(A @ point.basis))


def inv_sqrtm(S: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root via eigendecomposition."""
    S = np.asarray(S, dtype=float)
    if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise ValueError("covariance must be symmetric")
    w, U = np.linalg.eigh(S)
    if w[0] <= 0:
        raise ValueError("covariance must be positive definite")
    w = np.maximum(w, EIG_FLOOR * w[-1])
    return (U / np.sqrt(w)) @ U.T


def whitening_map(cov, mean) -> tuple[np.ndarray, np.ndarray]:
    A = inv_sqrtm(cov)
    return A, -A @ np.asarray(mean, dtype=float)


def whiten(point: MissingSubspacePoint, cov, mean) -> MissingSubspacePoint:
    A, b = whitening_map(cov, mean)
    return transform_affine(point, A, b)


def residual_outside(point: MissingSubspacePoint, y: np.ndarray) -> float:
    """Norm of the component of ``y - base`` orthogonal to V."""
    d = np.asarray(y, dtype=float) - point.base
    v = point.basis
    return float(np.linalg.norm(d - v @ (v.T @ d)))
