"""Rank aggregation, Friedman test and Nemenyi critical difference."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

# Studentized range quantiles / sqrt(2) at infinite degrees of freedom.
NEMENYI_Q = {
    0.05: {2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.949, 8: 3.031,
           9: 3.102, 10: 3.164},
    0.10: {2: 1.645, 3: 2.052, 4: 2.291, 5: 2.459, 6: 2.589, 7: 2.693, 8: 2.780,
           9: 2.855, 10: 2.920},
}


@dataclass(frozen=True)
class RankTable:
    ranks: np.ndarray                 # (n configurations, k methods)
    methods: tuple[str, ...]
    configurations: tuple[tuple, ...]

    @property
    def mean_ranks(self) -> np.ndarray:
        return self.ranks.mean(axis=0)

    @property
    def n(self) -> int:
        return self.ranks.shape[0]

    @property
    def k(self) -> int:
        return self.ranks.shape[1]


def midranks(scores: Sequence[float], descending: bool = True) -> np.ndarray:
    """Ranks 1..k with ties replaced by the average of the tied positions."""
    x = np.asarray(scores, dtype=float)
    key = -x if descending else x
    order = np.argsort(key, kind="stable")
    ranks = np.empty(len(x))
    sorted_key = key[order]
    start = 0
    while start < len(x):
        stop = start
        while stop + 1 < len(x) and sorted_key[stop + 1] == sorted_key[start]:
            stop += 1
        ranks[order[start:stop + 1]] = 0.5 * (start + stop) + 1.0
        start = stop + 1
    return ranks


def rank_methods(results: Mapping[tuple, Mapping[str, float]],
                 methods: Sequence[str] | None = None) -> RankTable:
    """Rank methods per configuration (rank 1 = highest accuracy).

    ``results`` maps a configuration key, e.g. ``(dataset, mechanism, p)``, to
    ``{method: accuracy}``.
    """
    configs = sorted(results, key=lambda c: tuple(str(t) for t in c))
    if methods is None:
        methods = sorted({m for c in configs for m in results[c]})
    methods = tuple(methods)
    rows = []
    for c in configs:
        missing = [m for m in methods if m not in results[c] or results[c][m] is None
                   or not math.isfinite(results[c][m])]
        if missing:
            raise ValueError(f"configuration {c} has no accuracy for {missing}")
        rows.append(midranks([results[c][m] for m in methods]))
    ranks = np.array(rows).reshape(len(configs), len(methods))
    return RankTable(ranks, methods, tuple(configs))


def _gammainc_lower_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    n = 0
    while True:
        n += 1
        term *= x / (a + n)
        total += term
        if abs(term) < abs(total) * 1e-16 or n > 10_000:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gammainc_upper_cf(a: float, x: float) -> float:
    # modified Lentz for the continued fraction of Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gammainc_lower_series(a, x)
    return _gammainc_upper_cf(a, x)


def chi2_sf(x: float, df: int) -> float:
    return gammaincc(0.5 * df, 0.5 * x)


def friedman_test(table: RankTable) -> tuple[float, int, float]:
    """Friedman chi-square statistic, degrees of freedom and p-value."""
    n, k = table.ranks.shape
    if n < 2 or k < 2:
        raise ValueError(f"Friedman test needs n >= 2 rows and k >= 2 methods, got n={n}, k={k}")
    R = table.mean_ranks
    stat = 12.0 * n / (k * (k + 1)) * (float(np.sum(R ** 2)) - k * (k + 1) ** 2 / 4.0)
    stat = max(stat, 0.0)
    return stat, k - 1, chi2_sf(stat, k - 1)


def nemenyi_cd(k: int, n: int, alpha: float = 0.05) -> float:
    """Nemenyi critical difference q_α sqrt(k(k+1)/(6n))."""
    if alpha not in NEMENYI_Q:
        raise ValueError(f"alpha must be one of {sorted(NEMENYI_Q)}")
    if k not in NEMENYI_Q[alpha]:
        raise ValueError(f"no tabulated Nemenyi constant for k={k} (supported: 2..10)")
    if n < 1:
        raise ValueError("n must be positive")
    return NEMENYI_Q[alpha][k] * math.sqrt(k * (k + 1) / (6.0 * n))


def cd_groups(mean_ranks: Mapping[str, float] | Sequence[float], cd: float,
              names: Sequence[str] | None = None) -> list[list[str]]:
    """Maximal sets of methods whose mean ranks all lie within ``cd`` of each other.

    Methods not joined to any other appear as singleton groups.
    """
    if isinstance(mean_ranks, Mapping):
        names = list(mean_ranks)
        values = [mean_ranks[m] for m in names]
    else:
        values = list(mean_ranks)
        names = list(names) if names is not None else [f"method{i + 1}" for i in range(len(values))]
    order = sorted(range(len(values)), key=lambda i: (values[i], names[i]))
    spans = []
    for a, i in enumerate(order):
        b = a
        while b + 1 < len(order) and values[order[b + 1]] - values[i] < cd:
            b += 1
        spans.append((a, b))
    groups = []
    for a, b in spans:
        if any(a2 <= a and b <= b2 and (a2, b2) != (a, b) for a2, b2 in spans):
            continue
        if (a, b) in [g[0] for g in groups]:
            continue
        groups.append(((a, b), [names[order[t]] for t in range(a, b + 1)]))
    return [g for _, g in groups]


def cd_diagram(table: RankTable, alpha: float = 0.05) -> dict:
    """Plot-ready data for a critical-difference diagram."""
    cd = nemenyi_cd(table.k, table.n, alpha)
    means = dict(zip(table.methods, table.mean_ranks.tolist()))
    stat, df, pval = friedman_test(table)
    groups = cd_groups(means, cd)
    return {
        "alpha": alpha,
        "n": table.n,
        "k": table.k,
        "mean_ranks": means,
        "cd": cd,
        "friedman": {"statistic": stat, "df": df, "p_value": pval},
        "groups": [{"methods": g, "interval": [min(means[m] for m in g), max(means[m] for m in g)]}
                   for g in groups],
    }
