"""Pure-numpy implementations of the hot loops (fallback for ``_core``).

Representations are packed as

* ``means``   (M, N) ambient means,
* ``factors`` (R, N) rows are the columns of each point's factor U_i,
  point i owning rows ``offsets[i]:offsets[i+1]``,
* ``logdets`` (M,) values of log det(I + 4γ Σ_V,i).

For a pair with stacked factor W = [U_i | U_j] (k columns) and s = 1/(2γ):

    G     = s I_k + WᵀW
    z     = G⁻¹ Wᵀ d,          d = m_i - m_j
    quad  = |d - W z|² / s + |z|²            (= dᵀ (s I + W Wᵀ)⁻¹ d)
    log K = (ld_i + ld_j)/4 - (log det G - k log s)/2 - quad/2
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular


def pair_value(mi, mj, Ui, Uj, gamma, ldi, ldj):
    d = mi - mj
    k = Ui.shape[0] + Uj.shape[0]
    if k == 0:
        sq = 0.0
        for t in range(d.shape[0]):
            sq += d[t] * d[t]
        return math.exp(-gamma * sq)
    s = 0.5 / gamma
    W = np.concatenate([Ui, Uj], axis=0)          # (k, N), rows are columns of W
    G = W @ W.T + s * np.eye(k)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        return math.nan
    logdet_g = 2.0 * np.log(np.diag(L)).sum()
    b = W @ d
    y = solve_triangular(L, b, lower=True)
    z = solve_triangular(L, y, lower=True, trans="T")
    r = d - W.T @ z
    quad = float(r @ r) / s + float(z @ z)
    log_k = 0.25 * (ldi + ldj) - 0.5 * (logdet_g - k * math.log(s)) - 0.5 * quad
    return math.exp(log_k)


def gram_sym(means, factors, offsets, logdets, gamma, n_threads=1):
    M = means.shape[0]
    K = np.empty((M, M))
    blocks = [factors[offsets[i]:offsets[i + 1]] for i in range(M)]
    for i in range(M):
        K[i, i] = 1.0
        for j in range(i + 1, M):
            K[i, j] = K[j, i] = pair_value(means[i], means[j], blocks[i], blocks[j],
                                           gamma, logdets[i], logdets[j])
    return K


def gram_rect(means_a, factors_a, offsets_a, logdets_a,
              means_b, factors_b, offsets_b, logdets_b, gamma, n_threads=1):
    Ma, Mb = means_a.shape[0], means_b.shape[0]
    K = np.empty((Ma, Mb))
    blocks_b = [factors_b[offsets_b[j]:offsets_b[j + 1]] for j in range(Mb)]
    for i in range(Ma):
        Ui = factors_a[offsets_a[i]:offsets_a[i + 1]]
        for j in range(Mb):
            K[i, j] = pair_value(means_a[i], means_b[j], Ui, blocks_b[j],
                                 gamma, logdets_a[i], logdets_b[j])
    return K


def _update_pair(ai, aj, yi, yj, Kii, Kjj, Kij, gi, gj, C):
    # gradient of ½αᵀQα - eᵀα at i, j
    Gi = yi * gi - 1.0
    Gj = yj * gj - 1.0
    quad = Kii + Kjj - 2.0 * Kij
    if quad <= 0.0:
        quad = 1e-12
    if yi != yj:
        delta = (-Gi - Gj) / quad
        diff = ai - aj
        ai += delta
        aj += delta
        if diff > 0:
            if aj < 0:
                aj = 0.0
                ai = diff
        else:
            if ai < 0:
                ai = 0.0
                aj = -diff
        if diff > 0:
            if ai > C:
                ai = C
                aj = C - diff
        else:
            if aj > C:
                aj = C
                ai = C + diff
    else:
        delta = (Gi - Gj) / quad
        total = ai + aj
        ai -= delta
        aj += delta
        if total > C:
            if ai > C:
                ai = C
                aj = total - C
        else:
            if aj < 0:
                aj = 0.0
                ai = total
        if total > C:
            if aj > C:
                aj = C
                ai = total - C
        else:
            if ai < 0:
                ai = 0.0
                aj = total
    return ai, aj


def smo(K, y, C, tol, max_iter):
    """SMO on the dual with maximal-violating-pair selection.

    ``K`` must be symmetric. Returns ``(alpha, g, n_iter, converged)`` where
    ``g = K @ (alpha * y)``.
    """
    M = K.shape[0]
    alpha = np.zeros(M)
    g = np.zeros(M)
    pos = y > 0
    it = 0
    converged = False
    while True:
        u = y - g
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        i = j = -1
        if up.any():
            i = int(np.argmax(np.where(up, u, -np.inf)))
        if low.any():
            j = int(np.argmin(np.where(low, u, np.inf)))
        if i < 0 or j < 0 or u[i] - u[j] < tol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        ai, aj = _update_pair(alpha[i], alpha[j], y[i], y[j], K[i, i], K[j, j], K[i, j],
                              g[i], g[j], C)
        dai = (ai - alpha[i]) * y[i]
        daj = (aj - alpha[j]) * y[j]
        alpha[i] = ai
        alpha[j] = aj
        g += dai * K[i] + daj * K[j]
    return alpha, g, it, converged
