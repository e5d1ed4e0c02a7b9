"""Experimental protocol: nested cross-validation with grid search, baselines
and repeated missingness injection."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from sklearn.model_selection import StratifiedKFold

from . import kernel
from .data import Dataset, StandardizationParams, apply_standardization, fit_standardization
from .density import estimate_em
from .kernel import PackedReps
from .missingness import inject
from .representation import PointRepresentation, represent_dataset
from .svm import predict, train

log = logging.getLogger(__name__)

METHODS = ("genrbf", "zero", "mean", "rbf")
DEFAULT_C_GRID = tuple(2.0 ** k for k in range(-5, 10, 2))
DEFAULT_GAMMA_GRID = tuple(2.0 ** k for k in range(-5, 16, 2))

RESULT_COLUMNS = ("dataset", "mechanism", "p", "method", "repetition", "fold", "C", "gamma",
                  "accuracy")


@dataclass(frozen=True)
class ExperimentConfig:
    c_grid: tuple[float, ...] = DEFAULT_C_GRID
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID
    outer_folds: int = 5
    inner_folds: int = 5
    repetitions: int = 10
    methods: tuple[str, ...] = ("genrbf", "zero", "mean")
    seed: int = 0
    svm_tol: float = 1e-3
    svm_max_passes: int = 100_000
    em_tol: float = 1e-6
    em_max_iters: int = 500
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "c_grid", tuple(sorted(float(c) for c in self.c_grid)))
        object.__setattr__(self, "gamma_grid", tuple(sorted(float(g) for g in self.gamma_grid)))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.c_grid or not self.gamma_grid:
            raise ValueError("grids must be non-empty")
        if any(c <= 0 for c in self.c_grid) or any(g <= 0 for g in self.gamma_grid):
            raise ValueError("grid values must be positive")
        if self.outer_folds < 2 or self.inner_folds < 2:
            raise ValueError("need at least 2 folds")
        if self.repetitions < 1:
            raise ValueError("need at least one repetition")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("c_grid", "gamma_grid", "methods"):
            d[k] = list(d[k])
        return d


def substream_seed(root: int, *names) -> int:
    """Deterministic 63-bit seed for a named substream of ``root``."""
    key = [int(root) & 0xFFFFFFFF, (int(root) >> 32) & 0xFFFFFFFF]
    key += [zlib.crc32(str(n).encode()) for n in names]
    return int(np.random.SeedSequence(key).generate_state(2, np.uint64)[0] >> np.uint64(1))


def impute_zero(data: Dataset) -> Dataset:
    return data.with_values(np.where(data.missing, 0.0, data.values),
                            np.zeros_like(data.missing))


def impute_mean(data: Dataset, means) -> Dataset:
    if isinstance(means, StandardizationParams):
        means = means.mean
    means = np.asarray(means, dtype=float)
    if means.shape != (data.n_features,):
        raise ValueError("need one mean per feature")
    return data.with_values(np.where(data.missing, means, data.values),
                            np.zeros_like(data.missing))


def _dirac(values: np.ndarray) -> list[PointRepresentation]:
    return [PointRepresentation.dirac(x) for x in values]


def _observed_means(data: Dataset) -> np.ndarray:
    return fit_standardization(data).mean


def prepare(method: str, train_data: Dataset, test_data: Dataset, config: ExperimentConfig):
    """Representations of the train and test split for ``method``.

    Inputs are already standardized with train-split statistics. Every fitted
    quantity here uses ``train_data`` only.
    """
    if method == "genrbf":
        model = estimate_em(train_data, max_iters=config.em_max_iters, tol=config.em_tol)
        return (represent_dataset(model, train_data.values, train_data.missing),
                represent_dataset(model, test_data.values, test_data.missing))
    if method == "zero":
        return _dirac(impute_zero(train_data).values), _dirac(impute_zero(test_data).values)
    if method == "mean":
        means = _observed_means(train_data)
        return (_dirac(impute_mean(train_data, means).values),
                _dirac(impute_mean(test_data, means).values))
    if method == "rbf":
        if not (train_data.is_complete and test_data.is_complete):
            raise ValueError("method 'rbf' needs complete data")
        return train_data.values, test_data.values
    raise ValueError(f"unknown method {method!r}")


class _KernelSource:
    """Train Gram and test-vs-train blocks per gamma, computed once."""

    def __init__(self, train_reps, test_reps):
        self.classical = isinstance(train_reps, np.ndarray)
        if self.classical:
            self.train, self.test = train_reps, test_reps
        else:
            self.train, self.test = PackedReps(train_reps), PackedReps(test_reps)
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def get(self, gamma: float):
        if gamma not in self._cache:
            if self.classical:
                K = kernel.rbf(self.train, self.train, gamma)
                np.fill_diagonal(K, 1.0)
                Kt = kernel.rbf(self.test, self.train, gamma)
            else:
                K = kernel.gram(self.train, gamma, n_threads=1)
                Kt = kernel.gram_cross(self.test, self.train, gamma, n_threads=1)
            self._cache[gamma] = (K, Kt)
        return self._cache[gamma]


def stratified_folds(labels: np.ndarray, n_folds: int, seed: int):
    labels = np.asarray(labels)
    counts = [int((labels == c).sum()) for c in (-1, 1)]
    if min(counts) < n_folds:
        raise ValueError(f"cannot stratify {n_folds} folds: class counts are {counts}; "
                         "each class needs at least one member per fold")
    skf = StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=seed % (2 ** 32))
    folds = list(skf.split(np.zeros(len(labels)), labels))
    for k, (tr, _) in enumerate(folds):
        if len(np.unique(labels[tr])) < 2:
            raise ValueError(f"fold {k}: training split lacks a class (stratification failed)")
    return folds


def _accuracy(K_train, y_train, K_eval, y_eval, C, config) -> float:
    model = train(K_train, y_train, C, tol=config.svm_tol, max_passes=config.svm_max_passes)
    pred = predict(model, K_eval[:, model.support_indices])
    return float(np.mean(pred == y_eval))


def select_hyperparameters(source: _KernelSource, y: np.ndarray, config: ExperimentConfig,
                           seed: int):
    """Inner CV over the grid; ties go to the smallest C, then the smallest gamma."""
    folds = stratified_folds(y, config.inner_folds, seed)
    best = None
    scores = {}
    for C in config.c_grid:
        for gamma in config.gamma_grid:
            K, _ = source.get(gamma)
            accs = []
            for tr, va in folds:
                Ktr = np.ascontiguousarray(K[np.ix_(tr, tr)])
                accs.append(_accuracy(Ktr, y[tr], K[np.ix_(va, tr)], y[va], C, config))
            score = float(np.mean(accs))
            scores[(C, gamma)] = score
            if best is None or score > best[0]:
                best = (score, C, gamma)
    return best[1], best[2], best[0]


@dataclass
class CVResult:
    mean_accuracy: float
    folds: list[dict] = field(default_factory=list)


def run_cv(data: Dataset, method: str, config: ExperimentConfig, seed: int | None = None) -> CVResult:
    """Double cross-validation of ``method`` on ``data``.

    Outer stratified folds; on each outer-train split the data are
    standardized, the method is fitted, (C, gamma) are chosen by inner CV and
    the final model is scored on the outer-test split.
    """
    seed = config.seed if seed is None else seed
    y = data.labels
    folds = stratified_folds(y, config.outer_folds, substream_seed(seed, "outer-folds"))
    out = []
    for k, (tr, te) in enumerate(folds):
        train_raw, test_raw = data.subset(tr), data.subset(te)
        params = fit_standardization(train_raw)
        train_std = apply_standardization(train_raw, params)
        test_std = apply_standardization(test_raw, params)
        train_reps, test_reps = prepare(method, train_std, test_std, config)
        source = _KernelSource(train_reps, test_reps)
        C, gamma, inner = select_hyperparameters(
            source, y[tr], config, substream_seed(seed, "inner-folds", k))
        K, Kt = source.get(gamma)
        acc = _accuracy(K, y[tr], Kt, y[te], C, config)
        out.append({"fold": k, "C": C, "gamma": gamma, "accuracy": acc,
                    "inner_accuracy": inner})
    return CVResult(float(np.mean([f["accuracy"] for f in out])), out)


@dataclass
class BenchmarkResult:
    records: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    errors: list[dict] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def accuracy_table(self) -> dict:
        """``{(dataset, mechanism, p): {method: mean accuracy}}``."""
        table: dict = {}
        for key, s in self.summary.items():
            ds, mech, p, method = key.split("|")
            table.setdefault((ds, mech, float(p)), {})[method] = s["mean"]
        return table


def summary_key(dataset: str, mechanism: str, p: float, method: str) -> str:
    return f"{dataset}|{mechanism}|{p:g}|{method}"


def _cell(name, data, mech, p, rep, methods, config):
    seed = config.seed
    if p > 0:
        injected = inject(data, mech, p, substream_seed(seed, "inject", name, mech, f"{p:g}", rep))
        work = injected.data
    else:
        work = data
    fold_seed = substream_seed(seed, "folds", name, mech, f"{p:g}", rep)
    results = {}
    for method in methods:
        t0 = time.perf_counter()
        try:
            res = run_cv(work, method, config, fold_seed)
            results[method] = (res, None, time.perf_counter() - t0)
        except Exception as exc:  # recorded per cell, the run continues
            log.exception("cell %s/%s/%g/%d/%s failed", name, mech, p, rep, method)
            results[method] = (None, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0)
    return (name, mech, p, rep), results


def run_benchmark(datasets: Mapping[str, Dataset], mechanisms: Sequence[str],
                  fractions: Sequence[float], config: ExperimentConfig) -> BenchmarkResult:
    """Inject missingness, run every method through ``run_cv``, aggregate."""
    for name, d in datasets.items():
        if not d.is_complete:
            raise ValueError(f"dataset {name!r} must be complete; missingness is injected here")
    tasks = [(name, mech, float(p), rep)
             for name in datasets for mech in mechanisms for p in fractions
             for rep in range(config.repetitions)]

    def run(task):
        name, mech, p, rep = task
        return _cell(name, datasets[name], mech, p, rep, config.methods, config)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            done = dict(pool.map(run, tasks))
    else:
        done = dict(map(run, tasks))

    result = BenchmarkResult(config=config.to_dict())
    for task in sorted(done, key=lambda t: (t[0], t[1], t[2], t[3])):
        name, mech, p, rep = task
        for method in config.methods:
            res, err, seconds = done[task][method]
            result.timings[f"{summary_key(name, mech, p, method)}|{rep}"] = seconds
            if err is not None:
                result.errors.append({"dataset": name, "mechanism": mech, "p": p,
                                      "method": method, "repetition": rep, "error": err})
                continue
            for f in res.folds:
                result.records.append({"dataset": name, "mechanism": mech, "p": p,
                                       "method": method, "repetition": rep, "fold": f["fold"],
                                       "C": f["C"], "gamma": f["gamma"],
                                       "accuracy": f["accuracy"]})
    per_rep: dict[str, dict[int, list[float]]] = {}
    for r in result.records:
        key = summary_key(r["dataset"], r["mechanism"], r["p"], r["method"])
        per_rep.setdefault(key, {}).setdefault(r["repetition"], []).append(r["accuracy"])
    for key in sorted(per_rep):
        accs = [float(np.mean(v)) for _, v in sorted(per_rep[key].items())]
        result.summary[key] = {"mean": float(np.mean(accs)), "sd": float(np.std(accs)),
                               "n_repetitions": len(accs), "accuracies": accs}
    return result


def format_records_csv(records: Sequence[dict]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in records:
        w.writerow([r["dataset"], r["mechanism"], f"{r['p']:g}", r["method"], r["repetition"],
                    r["fold"], repr(r["C"]), repr(r["gamma"]), repr(r["accuracy"])])
    return out.getvalue()


def write_results(result: BenchmarkResult, outdir) -> dict[str, Path]:
    """Write long-form CSV, summary JSON, errors and timings; return the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {"results": outdir / "results.csv", "summary": outdir / "summary.json",
             "timings": outdir / "timings.json"}
    paths["results"].write_text(format_records_csv(result.records))
    summary = {"config": result.config,
               "decisions": {"folds": "stratified", "tie_break": "smallest C, then smallest gamma",
                             "sd": "population sd over repetitions"},
               "cells": result.summary, "errors": result.errors}
    paths["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True))
    paths["timings"].write_text(json.dumps(result.timings, indent=2, sort_keys=True))
    return paths
