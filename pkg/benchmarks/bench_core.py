"""Compare the compiled core against the numpy fallback.

    python benchmarks/bench_core.py [--sizes 100 200 400] [--threads 1] [--repeat 3]

Times the symmetric Gram matrix and SMO training on random incomplete data
and reports the largest absolute difference between the two backends.
"""

import argparse
import logging
import time

import numpy as np

from genrbf import _backend
from genrbf.density import estimate_em
from genrbf.data import Dataset
from genrbf.kernel import PackedReps
from genrbf.missingness import inject_mcar
from genrbf.representation import represent_dataset


def make_reps(M, N, p, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(N, N))
    X = rng.normal(size=(M, N)) @ A.T
    y = np.where(X[:, 0] + 0.5 * rng.normal(size=M) > 0, 1, -1)
    data = inject_mcar(Dataset.from_array(X, y), p, seed)
    model = estimate_em(data, tol=1e-4)
    return PackedReps(represent_dataset(model, data.values, data.missing)), y


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    logging.getLogger("genrbf.density").setLevel(logging.ERROR)
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 200, 400])
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--p", type=float, default=0.4)
    ap.add_argument("--gamma", type=float, default=0.5)
    ap.add_argument("--C", type=float, default=8.0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cores = {"python": _backend.python_core}
    if _backend.compiled_core is not None:
        cores["cython"] = _backend.compiled_core
    else:
        print("compiled core not built; timing the fallback only")

    print(f"{'M':>6} {'op':>6} " + " ".join(f"{n:>12}" for n in cores) + f" {'speedup':>9} {'max diff':>10}")
    for M in args.sizes:
        P, y = make_reps(M, args.dim, args.p, seed=M)
        ld = P.logdets(args.gamma)
        res = {}
        for name, core in cores.items():
            res[name] = best_of(lambda: core.gram_sym(P.means, P.factors, P.offsets, ld,
                                                      args.gamma, args.threads), args.repeat)
        _report(M, "gram", res)
        K = res[next(iter(res))][1]
        np.fill_diagonal(K, 1.0)
        yf = y.astype(float)
        smo = {}
        for name, core in cores.items():
            smo[name] = best_of(lambda: core.smo(K, yf, args.C, 1e-3, 100_000), args.repeat)
        _report(M, "smo", {k: (t, out[0]) for k, (t, out) in smo.items()})


def _report(M, op, res):
    times = {k: t for k, (t, _) in res.items()}
    line = f"{M:>6} {op:>6} " + " ".join(f"{t * 1e3:>10.2f}ms" for t in times.values())
    if len(res) == 2:
        diff = float(np.max(np.abs(res["python"][1] - res["cython"][1])))
        line += f" {times['python'] / times['cython']:>8.1f}x {diff:>10.2e}"
    print(line)


if __name__ == "__main__":
    main()
