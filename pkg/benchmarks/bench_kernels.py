"""Numba vs pure-numpy timings for the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5] [--small]

Each kernel is called once first so JIT compilation is excluded, then timed
as the best of ``--repeat`` runs. Outputs are cross-checked before timing.
"""
import argparse
import time

import numpy as np

from csilab import kernels
from csilab._accel import HAS_NUMBA


def _inputs(small):
    rng = np.random.default_rng(0)
    n, p, m = (2000, 4, 64) if small else (20000, 4, 100)
    gains = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
    slopes = rng.uniform(-np.pi, np.pi, (n, p))
    y = np.exp(1j * np.pi * np.arange(32) * rng.uniform(-0.9, 0.9, (n // 10, 1)))
    y = y + 0.1 * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    lo = np.full(len(y), -1.0)
    hi = np.full(len(y), 1.0)
    v = 200 if small else 1000
    adj = rng.random((v, v)) < 0.05
    adj = np.triu(adj, 1)
    adj = adj | adj.T
    order = np.argsort(-adj.sum(axis=1), kind="stable")
    return {
        "accumulate_paths": ((gains, slopes, m), {}),
        "golden_refine": ((y, 0.5, lo, hi, 1e-6), {}),
        "greedy_color": ((adj, order), {}),
    }


def _best(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--small", action="store_true", help="tiny inputs for a smoke run")
    args = ap.parse_args(argv)
    if not HAS_NUMBA:
        print("numba is not importable; only the numpy path is timed")
    rows = []
    for name, (a, _) in _inputs(args.small).items():
        f_np = kernels.NUMPY_KERNELS[name]
        f_nb = kernels.NUMBA_KERNELS[name] if HAS_NUMBA else None
        ref = f_np(*a)
        if f_nb is not None:
            out = f_nb(*a)  # also triggers compilation
            if not np.allclose(ref, out, rtol=1e-9, atol=1e-9):
                raise SystemExit(f"{name}: numba and numpy outputs disagree")
        t_np = _best(f_np, a, args.repeat)
        t_nb = _best(f_nb, a, args.repeat) if f_nb is not None else float("nan")
        rows.append((name, t_np, t_nb))
    print(f"{'kernel':<18}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, t_np, t_nb in rows:
        print(f"{name:<18}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>10.1f}")
    return rows


if __name__ == "__main__":
    main()
