"""Compare the numba and pure-numpy paths of the grid kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--points 40000] [--queries 2000] [--repeat 5]

Each kernel runs once to warm up (numba compiles on first call) and is then
timed ``--repeat`` times; the best time is reported.  Results of both paths
are checked to agree before timing.  Also times one grid oracle call
(``grid_residuals`` on a 2-d regularized objective) under both paths.
"""

import argparse
import time

import numpy as np

from bepsolve import _kernels
from bepsolve.bifunctions import regularize
from bepsolve.distances import build_euclidean_pair
from bepsolve.oracle import GridSpec, grid_residuals
from bepsolve.problems import p2


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def grid_oracle_call(step):
    prob = p2()
    pair = build_euclidean_pair(prob.K)
    psi = regularize(prob.f, prob.h, 3.0, 1.0, np.array([0.2, -0.1]), pair)
    Y = GridSpec(step, prob.K).points()
    return lambda: grid_residuals(psi, Y, Y)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=40000, help="rows of Y (grid points)")
    ap.add_argument("--queries", type=int, default=2000, help="rows of Q (directions)")
    ap.add_argument("--dim", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--grid-step", type=float, default=0.02)
    args = ap.parse_args(argv)

    if _kernels.numba is None:
        print("numba is not installed; only the numpy path can be timed")
    rng = np.random.default_rng(args.seed)
    Q = rng.standard_normal((args.queries, args.dim))
    Y = rng.random((args.points, args.dim))
    c = rng.standard_normal(args.points)
    P = rng.standard_normal((args.points, args.dim)) * 2
    p1 = np.ascontiguousarray(P[:1])

    def single_rows(fn, calls=2000):
        # the inner solver projects one point per iteration
        return lambda: [fn(p1, 1.0) for _ in range(calls)][-1]

    cases = [
        ("max_affine", lambda: _kernels.max_affine_numpy(Q, Y, c),
         (lambda: _kernels._max_affine_nb(Q, Y, c)) if _kernels.numba else None),
        ("argmax_affine", lambda: _kernels.argmax_affine_numpy(Q, Y, c),
         (lambda: _kernels._argmax_affine_nb(Q, Y, c)) if _kernels.numba else None),
        ("project_simplex", lambda: _kernels.project_simplex_numpy(P, 1.0),
         (lambda: _kernels._project_simplex_nb(P, 1.0)) if _kernels.numba else None),
        ("project_simplex x1", single_rows(_kernels.project_simplex_numpy),
         single_rows(_kernels._project_simplex_nb) if _kernels.numba else None),
    ]
    print(f"{'kernel':<20} {'numpy [s]':>12} {'numba [s]':>12} {'speedup':>9} {'max |diff|':>11}")
    for name, np_fn, nb_fn in cases:
        t_np = best_of(np_fn, args.repeat)
        if nb_fn is None:
            print(f"{name:<20} {t_np:>12.4f} {'-':>12} {'-':>9} {'-':>11}")
            continue
        diff = float(np.max(np.abs(np.asarray(np_fn(), float) - np.asarray(nb_fn(), float))))
        t_nb = best_of(nb_fn, args.repeat)
        print(f"{name:<20} {t_np:>12.4f} {t_nb:>12.4f} {t_np / t_nb:>9.2f} {diff:>11.2e}")

    call = grid_oracle_call(args.grid_step)
    saved = _kernels.USE_NUMBA
    try:
        _kernels.USE_NUMBA = False
        t_np = best_of(call, args.repeat)
        if _kernels.numba is not None:
            _kernels.USE_NUMBA = True
            t_nb = best_of(call, args.repeat)
            print(f"{'grid_residuals':<20} {t_np:>12.4f} {t_nb:>12.4f} {t_np / t_nb:>9.2f} {'':>11}")
        else:
            print(f"{'grid_residuals':<20} {t_np:>12.4f}")
    finally:
        _kernels.USE_NUMBA = saved


if __name__ == "__main__":
    main()
