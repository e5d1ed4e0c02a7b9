"""Degenerate-Gaussian representations of missing points.

A point ``x + V`` is represented by the data Gaussian restricted to the
subspace, stored in factored form: the ambient mean, the orthonormal basis
``v`` and the small covariance expressed in that basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .density import GaussianModel
from .subspace import MissingSubspacePoint, from_mask


@dataclass(frozen=True)
class PointRepresentation:
    mean: np.ndarray
    basis: np.ndarray
    small_cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        basis = np.array(self.basis, dtype=float).reshape(mean.shape[0], -1)
        n = basis.shape[1]
        small_cov = np.array(self.small_cov, dtype=float).reshape(n, n)
        for arr in (mean, basis, small_cov):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "small_cov", small_cov)

    @classmethod
    def dirac(cls, x) -> "PointRepresentation":
        x = np.asarray(x, dtype=float)
        return cls(x, np.zeros((x.shape[0], 0)), np.zeros((0, 0)))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def factor(self) -> np.ndarray:
        """(N, n) matrix ``U`` with ``U Uᵀ`` equal to the ambient covariance."""
        if self.rank == 0:
            return self.basis.copy()
        L = np.linalg.cholesky(self.small_cov)
        return self.basis @ L

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "basis": self.basis.tolist(),
                "small_cov": self.small_cov.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PointRepresentation":
        mean = np.asarray(d["mean"], dtype=float)
        basis = np.asarray(d["basis"], dtype=float).reshape(mean.shape[0], -1)
        return cls(mean, basis, d["small_cov"])


def condition(model: GaussianModel, point: MissingSubspacePoint,
              _factor=None) -> PointRepresentation:
    """Restrict ``model`` to ``point`` and lift the result back to R^N."""
    if model.dim != point.dim:
        raise ValueError("model and point dimensions differ")
    v = point.basis
    if v.shape[1] == 0:
        return PointRepresentation.dirac(point.base)
    fac = _factor if _factor is not None else linalg.cho_factor(model.cov, lower=True)
    X = linalg.cho_solve(fac, v)                      # Σ⁻¹ v
    P = v.T @ X
    P = 0.5 * (P + P.T)
    try:
        pf = linalg.cho_factor(P, lower=True)
    except linalg.LinAlgError as exc:
        raise RuntimeError("vᵀΣ⁻¹v is numerically singular") from exc
    small_cov = linalg.cho_solve(pf, np.eye(P.shape[0]))
    small_cov = 0.5 * (small_cov + small_cov.T)
    small_mean = small_cov @ (X.T @ (model.mean - point.base))
    return PointRepresentation(point.base + v @ small_mean, v, small_cov)


def condition_many(model: GaussianModel, points) -> list[PointRepresentation]:
    fac = linalg.cho_factor(model.cov, lower=True)
    return [condition(model, p, fac) for p in points]


def represent_dataset(model: GaussianModel, values: np.ndarray,
                      missing: np.ndarray) -> list[PointRepresentation]:
    """Condition every row of a masked array on ``model``."""
    fac = linalg.cho_factor(model.cov, lower=True)
    return [condition(model, from_mask(values[i], missing[i]), fac)
            for i in range(values.shape[0])]


def ambient_cov(rep: PointRepresentation) -> np.ndarray:
    v = rep.basis
    if v.shape[1] == 0:
        return np.zeros((rep.dim, rep.dim))
    S = v @ rep.small_cov @ v.T
    return 0.5 * (S + S.T)
