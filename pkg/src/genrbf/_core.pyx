# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: pairwise kernel evaluation and SMO.

Same packed layout and arithmetic as ``genrbf._pycore``.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange, parallel
from libc.math cimport exp, log, sqrt, NAN
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef double _pair(const double* mi, const double* mj,
                  const double* Ui, Py_ssize_t ni,
                  const double* Uj, Py_ssize_t nj,
                  Py_ssize_t N, double gamma, double ldi, double ldj,
                  double* work) noexcept nogil:
    # work holds at least N + k*k + 2*k doubles, k = ni + nj
    cdef Py_ssize_t k = ni + nj
    cdef Py_ssize_t a, b, t
    cdef double* d = work
    cdef double* G = work + N
    cdef double* z = G + k * k
    cdef double* y = z + k
    cdef const double* wa
    cdef const double* wb
    cdef double acc, s, logdet_g, quad, sq, piv

    for t in range(N):
        d[t] = mi[t] - mj[t]
    if k == 0:
        sq = 0.0
        for t in range(N):
            sq = sq + d[t] * d[t]
        return exp(-gamma * sq)

    s = 0.5 / gamma
    # G = s I + WᵀW (lower triangle)
    for a in range(k):
        wa = Ui + a * N if a < ni else Uj + (a - ni) * N
        for b in range(a + 1):
            wb = Ui + b * N if b < ni else Uj + (b - ni) * N
            acc = 0.0
            for t in range(N):
                acc = acc + wa[t] * wb[t]
            G[a * k + b] = acc
        G[a * k + a] = G[a * k + a] + s
        acc = 0.0
        for t in range(N):
            acc = acc + wa[t] * d[t]
        y[a] = acc

    # in-place Cholesky, G = L Lᵀ
    logdet_g = 0.0
    for a in range(k):
        for b in range(a + 1):
            acc = G[a * k + b]
            for t in range(b):
                acc = acc - G[a * k + t] * G[b * k + t]
            if a == b:
                if acc <= 0.0:
                    return NAN
                piv = sqrt(acc)
                G[a * k + a] = piv
                logdet_g = logdet_g + log(piv)
            else:
                G[a * k + b] = acc / G[b * k + b]
    logdet_g = 2.0 * logdet_g

    # L y' = y, then Lᵀ z = y'
    for a in range(k):
        acc = y[a]
        for t in range(a):
            acc = acc - G[a * k + t] * y[t]
        y[a] = acc / G[a * k + a]
    for a in range(k - 1, -1, -1):
        acc = y[a]
        for t in range(a + 1, k):
            acc = acc - G[t * k + a] * z[t]
        z[a] = acc / G[a * k + a]

    # residual d - W z, overwriting d
    for a in range(k):
        wa = Ui + a * N if a < ni else Uj + (a - ni) * N
        for t in range(N):
            d[t] = d[t] - z[a] * wa[t]
    quad = 0.0
    for t in range(N):
        quad = quad + d[t] * d[t]
    quad = quad / s
    for a in range(k):
        quad = quad + z[a] * z[a]

    return exp(0.25 * (ldi + ldj) - 0.5 * (logdet_g - k * log(s)) - 0.5 * quad)


def gram_sym(double[:, ::1] means, double[:, ::1] factors, long[::1] offsets,
             double[::1] logdets, double gamma, int n_threads=1):
    cdef Py_ssize_t M = means.shape[0]
    cdef Py_ssize_t N = means.shape[1]
    cdef Py_ssize_t i, j, kmax = 0, r
    for i in range(M):
        r = offsets[i + 1] - offsets[i]
        if r > kmax:
            kmax = r
    kmax = 2 * kmax
    cdef Py_ssize_t wsize = N + kmax * kmax + 2 * kmax + 1
    out = np.empty((M, M), dtype=np.float64)
    cdef double[:, ::1] K = out
    cdef double* work
    cdef const double* fbase = &factors[0, 0] if factors.shape[0] > 0 else NULL
    if n_threads < 1:
        n_threads = 1
    with nogil, parallel(num_threads=n_threads):
        work = <double*> malloc(wsize * sizeof(double))
        for i in prange(M, schedule="dynamic"):
            K[i, i] = 1.0
            for j in range(i + 1, M):
                K[i, j] = _pair(&means[i, 0], &means[j, 0],
                                fbase + offsets[i] * N, offsets[i + 1] - offsets[i],
                                fbase + offsets[j] * N, offsets[j + 1] - offsets[j],
                                N, gamma, logdets[i], logdets[j], work)
        free(work)
    for i in range(M):
        for j in range(i + 1, M):
            K[j, i] = K[i, j]
    return out


def gram_rect(double[:, ::1] means_a, double[:, ::1] factors_a, long[::1] offsets_a,
              double[::1] logdets_a,
              double[:, ::1] means_b, double[:, ::1] factors_b, long[::1] offsets_b,
              double[::1] logdets_b, double gamma, int n_threads=1):
    cdef Py_ssize_t Ma = means_a.shape[0]
    cdef Py_ssize_t Mb = means_b.shape[0]
    cdef Py_ssize_t N = means_a.shape[1]
    cdef Py_ssize_t i, j, ka = 0, kb = 0, r
    for i in range(Ma):
        r = offsets_a[i + 1] - offsets_a[i]
        if r > ka:
            ka = r
    for j in range(Mb):
        r = offsets_b[j + 1] - offsets_b[j]
        if r > kb:
            kb = r
    cdef Py_ssize_t kmax = ka + kb
    cdef Py_ssize_t wsize = N + kmax * kmax + 2 * kmax + 1
    out = np.empty((Ma, Mb), dtype=np.float64)
    cdef double[:, ::1] K = out
    cdef double* work
    cdef const double* fa = &factors_a[0, 0] if factors_a.shape[0] > 0 else NULL
    cdef const double* fb = &factors_b[0, 0] if factors_b.shape[0] > 0 else NULL
    if n_threads < 1:
        n_threads = 1
    with nogil, parallel(num_threads=n_threads):
        work = <double*> malloc(wsize * sizeof(double))
        for i in prange(Ma, schedule="dynamic"):
            for j in range(Mb):
                K[i, j] = _pair(&means_a[i, 0], &means_b[j, 0],
                                fa + offsets_a[i] * N, offsets_a[i + 1] - offsets_a[i],
                                fb + offsets_b[j] * N, offsets_b[j + 1] - offsets_b[j],
                                N, gamma, logdets_a[i], logdets_b[j], work)
        free(work)
    return out


cdef inline void _update_pair(double* ai, double* aj, double yi, double yj,
                              double Kii, double Kjj, double Kij,
                              double gi, double gj, double C) noexcept nogil:
    cdef double Gi = yi * gi - 1.0
    cdef double Gj = yj * gj - 1.0
    cdef double quad = Kii + Kjj - 2.0 * Kij
    cdef double delta, diff, total
    cdef double a_i = ai[0]
    cdef double a_j = aj[0]
    if quad <= 0.0:
        quad = 1e-12
    if yi != yj:
        delta = (-Gi - Gj) / quad
        diff = a_i - a_j
        a_i += delta
        a_j += delta
        if diff > 0:
            if a_j < 0:
                a_j = 0.0
                a_i = diff
        else:
            if a_i < 0:
                a_i = 0.0
                a_j = -diff
        if diff > 0:
            if a_i > C:
                a_i = C
                a_j = C - diff
        else:
            if a_j > C:
                a_j = C
                a_i = C + diff
    else:
        delta = (Gi - Gj) / quad
        total = a_i + a_j
        a_i -= delta
        a_j += delta
        if total > C:
            if a_i > C:
                a_i = C
                a_j = total - C
        else:
            if a_j < 0:
                a_j = 0.0
                a_i = total
        if total > C:
            if a_j > C:
                a_j = C
                a_i = total - C
        else:
            if a_i < 0:
                a_i = 0.0
                a_j = total
    ai[0] = a_i
    aj[0] = a_j


def smo(double[:, ::1] K, double[::1] y, double C, double tol, long max_iter):
    cdef Py_ssize_t M = K.shape[0]
    alpha_arr = np.zeros(M)
    g_arr = np.zeros(M)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] g = g_arr
    cdef long it = 0
    cdef bint converged = False
    cdef Py_ssize_t i, j, t
    cdef double u, best_up, best_low, ai, aj, dai, daj
    cdef bint in_up, in_low
    with nogil:
        while True:
            i = -1
            j = -1
            best_up = 0.0
            best_low = 0.0
            for t in range(M):
                u = y[t] - g[t]
                if y[t] > 0:
                    in_up = alpha[t] < C
                    in_low = alpha[t] > 0
                else:
                    in_up = alpha[t] > 0
                    in_low = alpha[t] < C
                if in_up and (i < 0 or u > best_up):
                    i = t
                    best_up = u
                if in_low and (j < 0 or u < best_low):
                    j = t
                    best_low = u
            if i < 0 or j < 0 or best_up - best_low < tol:
                converged = True
                break
            if it >= max_iter:
                break
            it += 1
            ai = alpha[i]
            aj = alpha[j]
            _update_pair(&ai, &aj, y[i], y[j], K[i, i], K[j, j], K[i, j], g[i], g[j], C)
            dai = (ai - alpha[i]) * y[i]
            daj = (aj - alpha[j]) * y[j]
            alpha[i] = ai
            alpha[j] = aj
            for t in range(M):
                g[t] = g[t] + (dai * K[i, t] + daj * K[j, t])
    return alpha_arr, g_arr, it, bool(converged)
