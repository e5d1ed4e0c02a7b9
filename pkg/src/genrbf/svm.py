"""Soft-margin SVM on a precomputed kernel matrix, trained by SMO."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .kernel import KernelParams
from .representation import PointRepresentation

log = logging.getLogger(__name__)


@dataclass
class SvmModel:
    alphas: np.ndarray
    bias: float
    labels: np.ndarray
    C: float
    params: KernelParams | None = None
    support_reps: list[PointRepresentation] | None = None
    converged: bool = True
    n_iter: int = 0
    train_accuracy: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.alphas > 0)

    @property
    def dual_coef(self) -> np.ndarray:
        """alpha_j * y_j for the support vectors, in model order."""
        sv = self.support_indices
        return self.alphas[sv] * self.labels[sv]

    def decision_function(self, cross) -> np.ndarray:
        cross = np.atleast_2d(np.asarray(cross, dtype=float))
        n_sv = self.support_indices.shape[0]
        if cross.shape[1] != n_sv:
            raise ValueError(f"expected {n_sv} kernel columns (one per support vector), "
                             f"got {cross.shape[1]}")
        return cross @ self.dual_coef + self.bias

    def to_dict(self) -> dict:
        sv = self.support_indices
        d = {
            "alphas": self.alphas[sv].tolist(),
            "labels": self.labels[sv].astype(int).tolist(),
            "support_indices": sv.tolist(),
            "n_train": int(self.alphas.shape[0]),
            "bias": self.bias,
            "C": self.C,
            "gamma": None if self.params is None else self.params.gamma,
            "converged": self.converged,
            "n_iter": self.n_iter,
        }
        if self.support_reps is not None:
            d["support_representations"] = [r.to_dict() for r in self.support_reps]
        d.update(self.extra)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        n = int(d["n_train"])
        sv = np.asarray(d["support_indices"], dtype=int)
        alphas = np.zeros(n)
        alphas[sv] = d["alphas"]
        labels = np.zeros(n, dtype=np.int64)
        labels[sv] = d["labels"]
        reps = None
        if "support_representations" in d:
            reps = [PointRepresentation.from_dict(r) for r in d["support_representations"]]
        known = {"alphas", "labels", "support_indices", "n_train", "bias", "C", "gamma",
                 "converged", "n_iter", "support_representations"}
        return cls(alphas, float(d["bias"]), labels, float(d["C"]),
                   KernelParams(d["gamma"]) if d.get("gamma") else None, reps,
                   bool(d.get("converged", True)), int(d.get("n_iter", 0)),
                   extra={k: v for k, v in d.items() if k not in known})

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        return cls.from_dict(json.loads(text))


def _bias(alphas, y, g, C):
    u = y - g
    free = (alphas > 0) & (alphas < C)
    if free.any():
        return float(u[free].mean())
    at_zero, at_c = alphas <= 0, alphas >= C
    lower = np.concatenate([u[at_zero & (y > 0)], u[at_c & (y < 0)]])
    upper = np.concatenate([u[at_zero & (y < 0)], u[at_c & (y > 0)]])
    if lower.size and upper.size:
        return float(0.5 * (lower.max() + upper.min()))
    if lower.size:
        return float(lower.max())
    if upper.size:
        return float(upper.min())
    return 0.0


def sign(f) -> np.ndarray:
    return np.where(np.asarray(f) >= 0, 1, -1)


def train(gram, labels, C: float, tol: float = 1e-3, max_passes: int = 100_000,
          params: KernelParams | None = None, support_reps=None, core=None) -> SvmModel:
    """Fit a soft-margin SVM on a precomputed Gram matrix.

    Parameters
    ----------
    gram : (M, M) array
        Symmetric kernel matrix of the training points.
    labels : (M,) array of ±1
    C : float
        Box constraint on the dual coefficients.
    tol : float
        Stop when the maximal KKT violation falls below ``tol``.
    max_passes : int
        Maximum number of pair updates. If reached, the model is returned with
        ``converged=False``.
    params, support_reps : optional
        Stored on the model; ``support_reps`` may list representations for
        every training point and is reduced to the support vectors.
    """
    K = np.ascontiguousarray(gram, dtype=float)
    y = np.asarray(labels, dtype=float).reshape(-1)
    M = y.shape[0]
    if K.shape != (M, M):
        raise ValueError(f"gram shape {K.shape} does not match {M} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if np.all(y > 0) or np.all(y < 0):
        raise ValueError("training labels contain a single class")
    if not C > 0:
        raise ValueError("C must be positive")
    core = core or _backend.core
    alphas, g, n_iter, converged = core.smo(K, y, float(C), float(tol), int(max_passes))
    if not converged:
        log.warning("SMO hit max_passes=%d before reaching tol=%g", max_passes, tol)
    bias = _bias(alphas, y, g, C)
    model = SvmModel(alphas, bias, y.astype(np.int64), float(C), params, None,
                     bool(converged), int(n_iter))
    sv = model.support_indices
    if support_reps is not None:
        model.support_reps = [support_reps[i] for i in sv]
    model.train_accuracy = float(np.mean(predict(model, K[:, sv]) == model.labels))
    return model


def predict(model: SvmModel, cross) -> np.ndarray:
    """Labels for test points given their kernel values against the support vectors."""
    return sign(model.decision_function(cross))


def dual_objective(alphas, gram, labels) -> float:
    ay = np.asarray(alphas) * np.asarray(labels, dtype=float)
    return float(np.sum(alphas) - 0.5 * ay @ np.asarray(gram) @ ay)


def kkt_violation(model: SvmModel, gram) -> float:
    """Largest violation of the KKT conditions over the training points."""
    a, y, C = model.alphas, model.labels.astype(float), model.C
    yf = y * (np.asarray(gram) @ (a * y) + model.bias)
    viol = np.where(a <= 0, np.maximum(0.0, 1 - yf),
                    np.where(a >= C, np.maximum(0.0, yf - 1), np.abs(yf - 1)))
    return float(viol.max())
