"""Compare the numba and numpy simplex backends.

    python3 benchmarks/bench_kernels.py [--reps N]

Times the bare pivot loop on captured tableaux and whole ``allocate_power``
calls (desk and full-scale sizes) with each backend swapped in.
"""
import argparse
import time

import numpy as np

from dreemnet import _kernels, lp
from dreemnet.env import desk_scenario, generate_episode, paper_scenario


def capture_tableaux(cfg, n, seed=0):
    """Record the tableaux that allocate_power hands to the pivot loop."""
    rng = np.random.default_rng(seed)
    seen = []
    real = lp._kernels.simplex_loop

    def spy(T, basis, n_enter, tol, max_iter):
        seen.append((T.copy(), basis.copy(), n_enter, tol, max_iter))
        return real(T, basis, n_enter, tol, max_iter)

    lp._kernels.simplex_loop = spy
    try:
        while len(seen) < n:
            ep = generate_episode(cfg.replace(T=1), rng)
            lp.allocate_power(ep.H[1], rng.integers(0, 2, cfg.M), ep.r_min[1], ep.sigma2, cfg)
    finally:
        lp._kernels.simplex_loop = real
    return seen[:n]


def time_loop(fn, cases, reps):
    best = np.inf
    for _ in range(reps):
        work = [(T.copy(), b.copy(), n, tol, it) for T, b, n, tol, it in cases]
        t0 = time.perf_counter()
        for args in work:
            fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best / len(cases)


def time_allocate(fn, cfg, n, reps):
    rng = np.random.default_rng(1)
    insts = []
    for _ in range(n):
        ep = generate_episode(cfg.replace(T=1), rng)
        insts.append((ep.H[1], rng.integers(0, 2, cfg.M), ep.r_min[1], ep.sigma2))
    real = lp._kernels.simplex_loop
    lp._kernels.simplex_loop = fn
    try:
        best = np.inf
        for _ in range(reps):
            t0 = time.perf_counter()
            for H, a, r, s2 in insts:
                lp.allocate_power(H, a, r, s2, cfg)
            best = min(best, time.perf_counter() - t0)
    finally:
        lp._kernels.simplex_loop = real
    return best / n


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--n", type=int, default=300)
    args = ap.parse_args(argv)

    backends = {"numpy": _kernels.simplex_loop_numpy}
    if _kernels.simplex_loop_numba is not None:
        backends["numba"] = _kernels.simplex_loop_numba
    for name, cfg in (("desk M=6 K=2", desk_scenario()), ("full M=10 K=4", paper_scenario())):
        cases = capture_tableaux(cfg, args.n)
        # warm the jit before timing
        for fn in backends.values():
            T, b, n, tol, it = cases[0]
            fn(T.copy(), b.copy(), n, tol, it)
        print(f"{name}: tableau {cases[0][0].shape}")
        for bname, fn in backends.items():
            loop = time_loop(fn, cases, args.reps)
            full = time_allocate(fn, cfg, args.n, args.reps)
            print(f"  {bname:6s} pivot loop {loop * 1e6:8.1f} us   allocate_power {full * 1e6:8.1f} us")


if __name__ == "__main__":
    main()
