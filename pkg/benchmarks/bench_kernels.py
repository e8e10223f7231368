"""Timing comparison of the compiled and pure-Python stepping kernels.

Runs the single-trajectory sweep (cn_evolve) and the blocked end-state sweep
(cn_sweep_block) on the same banded operator with both backends, checks that
they agree to near machine precision, and prints a small table.

    python3 benchmarks/bench_kernels.py [--n 400] [--m 1024] [--block 8] [--repeat 5]
"""

import argparse
import math
import sys
import time

import numpy as np

from pstab._kernels import _cn_py
from pstab.evolution import SpaceTimeField, TimeGrid
from pstab.spectral import DomainSpec, OperatorSpec, build_operator

try:
    from pstab._kernels import _cn_cy
except ImportError:
    _cn_cy = None


def best_of(repeat, fn):
    best = math.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=400, help="interior grid points")
    ap.add_argument("--m", type=int, default=1024, help="time steps")
    ap.add_argument("--block", type=int, default=8, help="columns in the blocked sweep")
    ap.add_argument("--repeat", type=int, default=5, help="timing repetitions (best-of)")
    args = ap.parse_args(argv)

    dom = DomainSpec(kind="interval", x_bounds=(0.0, math.pi), n=args.n)
    op = build_operator(dom, OperatorSpec(a=1.0, c=-1.0, lambda_star=0.5))
    tg = TimeGrid(T=1.0, m=args.m)
    half_times = (np.arange(args.m) + 0.5) * tg.dt
    e_half = SpaceTimeField("0.05*cos(x)*cos(t)").sample_steps(dom, half_times)
    g_half = SpaceTimeField("sin(2*x)*exp(-t)").sample_steps(dom, half_times)

    rng = np.random.default_rng(0)
    y0 = rng.standard_normal(args.n)
    y0_block = rng.standard_normal((args.n, args.block))
    g_sp = rng.standard_normal((args.n, args.block))
    g_tau = np.cos(half_times)

    def run_evolve(impl):
        return impl.cn_evolve(op.off, op.diag, e_half, g_half, y0, tg.dt, tg.m)

    def run_block(impl):
        return impl.cn_sweep_block(
            op.off, op.diag, e_half, y0_block, g_sp, g_tau, tg.dt, tg.m
        )

    backends = [("python", _cn_py)]
    if _cn_cy is not None:
        backends.append(("cython", _cn_cy))
    else:
        print("compiled backend not built; timing the pure backend only")

    results = {}
    for name, impl in backends:
        results[name] = {
            "evolve": best_of(args.repeat, lambda: run_evolve(impl)),
            "block": best_of(args.repeat, lambda: run_block(impl)),
        }

    if _cn_cy is not None:
        gap_evolve = float(
            np.max(np.abs(run_evolve(_cn_py) - run_evolve(_cn_cy)))
        )
        gap_block = float(np.max(np.abs(run_block(_cn_py) - run_block(_cn_cy))))
        print(
            f"agreement: evolve {gap_evolve:.3e}, block {gap_block:.3e} "
            f"(tolerance 1e-12)"
        )
        if max(gap_evolve, gap_block) > 1e-12:
            print("BACKENDS DISAGREE", file=sys.stderr)
            return 1

    print(
        f"\nn = {args.n}, m = {args.m}, block = {args.block}, "
        f"best of {args.repeat}"
    )
    print(f"{'backend':<10} {'evolve [ms]':>12} {'block [ms]':>12}")
    for name, timing in results.items():
        print(
            f"{name:<10} {1e3 * timing['evolve']:>12.2f} "
            f"{1e3 * timing['block']:>12.2f}"
        )
    if "cython" in results:
        for key in ("evolve", "block"):
            speed = results["python"][key] / results["cython"][key]
            print(f"speedup {key}: {speed:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
