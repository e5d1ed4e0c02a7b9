"""Single-Gaussian density estimation from incomplete data via EM."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .data import Dataset

log = logging.getLogger(__name__)

_LOG2PI = np.log(2.0 * np.pi)


class EMDivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaussianModel:
    mean: np.ndarray
    cov: np.ndarray
    ridge: float = 0.0
    n_iter: int = 0
    loglik: float = float("nan")

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise ValueError("covariance shape does not match mean")
        cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def transform(self, A, b) -> "GaussianModel":
        """Push the model through ``w -> A w + b``."""
        A = np.asarray(A, dtype=float)
        return GaussianModel(A @ self.mean + np.asarray(b, dtype=float),
                             A @ self.cov @ A.T, self.ridge, self.n_iter, self.loglik)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "covariance": self.cov.tolist(),
                "ridge": self.ridge}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianModel":
        return cls(d["mean"], d["covariance"], float(d.get("ridge", 0.0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GaussianModel":
        return cls.from_dict(json.loads(text))


def _pattern_groups(missing: np.ndarray):
    """``[(observed idx, missing idx, rows), ...]`` grouped by missing pattern."""
    if missing.shape[0] == 0:
        return []
    keys, inverse = np.unique(missing, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(keys) + 1))
    groups = []
    for k, key in enumerate(keys):
        rows = order[bounds[k]:bounds[k + 1]]
        groups.append((np.flatnonzero(~key), np.flatnonzero(key), rows))
    return groups


def _e_step(values, groups, mean, cov, stats=True):
    """Observed-data log-likelihood at (mean, cov) and, optionally, the
    conditional expectations of the rows and the summed conditional
    covariances of their missing blocks."""
    N = mean.shape[0]
    ll = 0.0
    X_hat = values.copy() if stats else None
    C_sum = np.zeros((N, N)) if stats else None
    for obs, miss, rows in groups:
        r = rows.shape[0]
        if obs.size == 0:
            if stats:
                X_hat[rows] = mean
                C_sum += r * cov
            continue
        L = np.linalg.cholesky(cov[np.ix_(obs, obs)])
        D = values[np.ix_(rows, obs)] - mean[obs]
        Z = linalg.solve_triangular(L, D.T, lower=True, check_finite=False)
        logdet = 2.0 * np.log(np.diag(L)).sum()
        ll += float(-0.5 * (Z * Z).sum() - 0.5 * r * (obs.size * _LOG2PI + logdet))
        if stats and miss.size:
            # Σ_MO Σ_OO⁻¹ (x_O - m_O) = (L⁻¹ Σ_OM)ᵀ (L⁻¹ (x_O - m_O))
            B = linalg.solve_triangular(L, cov[np.ix_(obs, miss)], lower=True,
                                        check_finite=False)
            X_hat[np.ix_(rows, miss)] = mean[miss] + Z.T @ B
            C_sum[np.ix_(miss, miss)] += r * (cov[np.ix_(miss, miss)] - B.T @ B)
    return ll, X_hat, C_sum


def log_likelihood_observed(data: Dataset, model: GaussianModel) -> float:
    """Sum over rows of the marginal log-density of the observed coordinates."""
    if model.dim != data.n_features:
        raise ValueError("model dimension does not match data")
    ll, _, _ = _e_step(data.values, _pattern_groups(data.missing), model.mean, model.cov,
                       stats=False)
    return ll


def _m_step(X_hat, C_sum, ridge):
    n, N = X_hat.shape
    mean = X_hat.mean(axis=0)
    Xc = X_hat - mean
    cov = (Xc.T @ Xc + C_sum) / n
    return mean, 0.5 * (cov + cov.T) + ridge * np.eye(N)


def penalized_objective(ll: float, cov: np.ndarray, n: int, ridge: float) -> float:
    """``ll - n/2 * ridge * trace(cov⁻¹)``, the quantity a ridged EM step increases.

    Adding ``ridge * I`` after the M-step is the exact maximizer of the expected
    complete-data log-likelihood plus this penalty, so EM is monotone in it.
    """
    if ridge == 0:
        return ll
    L = np.linalg.cholesky(cov)
    Linv = linalg.solve_triangular(L, np.eye(cov.shape[0]), lower=True, check_finite=False)
    return ll - 0.5 * n * ridge * float((Linv * Linv).sum())


def estimate_em(data: Dataset, max_iters: int = 500, tol: float = 1e-6,
                ridge: float | None = None) -> GaussianModel:
    """Maximum-likelihood Gaussian for incomplete data (MAR) by EM.

    Parameters
    ----------
    data : Dataset
    max_iters : int
        Maximum number of EM iterations.
    tol : float
        Stop once the observed-data log-likelihood improves by less than this.
        With ``ridge > 0`` the monitored quantity is the ridge-penalized
        log-likelihood (see `penalized_objective`), which EM never decreases.
    ridge : float, optional
        Added to the covariance diagonal after each M-step. Defaults to
        ``1e-6 * trace(S0) / N`` with ``S0`` the initial diagonal covariance.

    Returns
    -------
    GaussianModel
    """
    n, N = data.values.shape
    if n < 2:
        raise ValueError("need at least 2 rows to estimate a covariance")
    observed = ~data.missing
    counts = observed.sum(axis=0)
    if np.any(counts == 0):
        j = int(np.flatnonzero(counts == 0)[0])
        name = data.feature_names[j] if data.feature_names else f"feature {j}"
        raise ValueError(f"{name} is never observed")

    mean = np.where(observed, data.values, 0.0).sum(axis=0) / counts
    var = (np.where(observed, data.values - mean, 0.0) ** 2).sum(axis=0) / counts
    if ridge is None:
        ridge = 1e-6 * var.sum() / N
        if ridge <= 0:
            ridge = 1e-6
    var = np.where(var > 0, var, ridge)
    cov = np.diag(var)

    groups = _pattern_groups(data.missing)
    obj_prev = None
    it = 0
    while True:
        ll, X_hat, C_sum = _e_step(data.values, groups, mean, cov)
        obj = penalized_objective(ll, cov, n, ridge)
        if obj_prev is not None:
            if obj < obj_prev - 10 * tol:
                raise EMDivergenceError(
                    f"log-likelihood decreased from {obj_prev:.10g} to {obj:.10g} "
                    f"at iteration {it}")
            if obj - obj_prev < tol:
                break
        if it >= max_iters:
            log.warning("EM stopped after %d iterations without reaching tol=%g",
                        max_iters, tol)
            break
        mean, cov = _m_step(X_hat, C_sum, ridge)
        obj_prev = obj
        it += 1
    return GaussianModel(mean, cov, ridge, it, ll)
