"""Reference computations written independently of the package internals.

Each oracle uses the most direct textbook route (dense matrices, explicit
inverses, numerical integration) so that agreement with the package is
evidence rather than a restatement of the same code path.
"""

import numpy as np
from scipy import integrate, stats


def random_spd(rng, n, cond=50.0):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    eig = np.exp(rng.uniform(0, np.log(cond), size=n))
    S = (Q * eig) @ Q.T
    return 0.5 * (S + S.T)


def schur_conditional(m, S, x, missing):
    """Conditional moments of the missing block given the observed one."""
    miss = np.flatnonzero(missing)
    obs = np.flatnonzero(~missing)
    if obs.size == 0:
        return m.copy(), S.copy()
    S_oo_inv = np.linalg.inv(S[np.ix_(obs, obs)])
    S_mo = S[np.ix_(miss, obs)]
    cm = m[miss] + S_mo @ S_oo_inv @ (x[obs] - m[obs])
    cS = S[np.ix_(miss, miss)] - S_mo @ S_oo_inv @ S_mo.T
    return cm, cS


def dense_genrbf(ma, Sa, mb, Sb, gamma):
    """Kernel from full ambient covariances with plain determinants and solves."""
    N = ma.shape[0]
    I = np.eye(N)
    Z = (np.linalg.det(I + 4 * gamma * Sa) ** 0.25 * np.linalg.det(I + 4 * gamma * Sb) ** 0.25
         / np.linalg.det(I + 2 * gamma * (Sa + Sb)) ** 0.5)
    d = ma - mb
    S_hat = I / (2 * gamma) + Sa + Sb
    return Z * np.exp(-0.5 * d @ np.linalg.solve(S_hat, d))


def quadrature_l2_inner_2d(m1, S1, m2, S2, n=801, width=6.0):
    """Trapezoidal ∫ N(m1,S1) N(m2,S2) over a box covering both densities."""
    sd = np.sqrt(np.maximum(np.diag(S1), np.diag(S2)))
    lo = np.minimum(m1, m2) - width * sd
    hi = np.maximum(m1, m2) + width * sd
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X, Y], axis=-1)
    f = stats.multivariate_normal(m1, S1).pdf(pts) * stats.multivariate_normal(m2, S2).pdf(pts)
    return integrate.trapezoid(integrate.trapezoid(f, ys, axis=1), xs)


def loglik_by_integration_2d(X, missing, m, S):
    """Observed-data log-likelihood; missing coordinates integrated out numerically."""
    joint = stats.multivariate_normal(m, S)
    total = 0.0
    for x, mask in zip(X, missing):
        if mask.all():
            continue
        if not mask.any():
            total += joint.logpdf(x)
            continue
        j = int(np.flatnonzero(mask)[0])

        def f(t, x=x, j=j):
            z = x.copy()
            z[j] = t
            return joint.pdf(z)

        val, _ = integrate.quad(f, -np.inf, np.inf, epsabs=0, epsrel=1e-12)
        total += np.log(val)
    return total


def max_kkt_violation(alphas, y, K, b, C):
    f = K @ (alphas * y) + b
    yf = y * f
    viol = np.zeros_like(alphas)
    at0 = alphas <= 1e-12
    atC = alphas >= C - 1e-12
    free = ~at0 & ~atC
    viol[at0] = np.maximum(0, 1 - yf[at0])
    viol[atC] = np.maximum(0, yf[atC] - 1)
    viol[free] = np.abs(yf[free] - 1)
    return viol.max()


def random_feasible_alpha(rng, y, C):
    """Uniform box point projected onto Σ α y = 0 while staying in [0, C]."""
    a = rng.uniform(0, C, size=y.shape[0])
    # scale the larger class's mass down so both sides balance
    pos, neg = a[y > 0].sum(), a[y < 0].sum()
    if pos > neg:
        a[y > 0] *= neg / pos
    else:
        a[y < 0] *= pos / neg
    return a


def svm_dual(alphas, y, K):
    ay = alphas * y
    return alphas.sum() - 0.5 * ay @ K @ ay
