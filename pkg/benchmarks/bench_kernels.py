"""Compiled vs numpy timings for the hot loops.

    python benchmarks/bench_kernels.py [--n 12] [--hidden 18] [--samples 2000] [--repeat 3]

Both paths are fed the same pre-drawn random numbers, so besides wall time
the script also checks that they produce identical samples and minima, and
reports the largest deviation between the two softplus row sums.
"""

import argparse
import time

import numpy as np

from qaoarbm import kernels, sampler
from qaoarbm._jit import USE_NUMBA
from qaoarbm.graph import generate_random_regular


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def bench_chains(n, m, samples, repeat, rx_j):
    rng = np.random.default_rng(0)
    a, b, W = (0.3 * (rng.normal(size=s) + 1j * rng.normal(size=s)) for s in ((n,), (m,), (n, m)))
    cfg = sampler.McmcConfig(samples, 4, stride=n, burn_in=10 * n * n, seed=1)
    bits0, flips, logu = sampler._draw(n, cfg)
    c, s = complex(np.cos(0.3)), complex(-1j * np.sin(0.3))
    anchor = n * -(-kernels.ANCHOR_STEPS // n)
    args = (a, b, W, bits0, flips, logu, cfg.burn_in, n, anchor, samples, rx_j, c, s)
    kernels._run_chains_numba(*args)  # compile outside the timing
    t_nb, (o_nb, _) = best_of(lambda: kernels._run_chains_numba(*args), repeat)
    t_np, (o_np, _) = best_of(lambda: kernels._run_chains_numpy(*args), max(1, repeat // 3))
    steps = 4 * cfg.n_steps
    label = "rx chain" if rx_j >= 0 else "psi chain"
    print(f"{label:10s} N={n} M={m} steps={steps}: numba {t_nb:8.3f}s ({1e9 * t_nb / steps:6.0f} ns/step)"
          f"  numpy {t_np:8.3f}s  speedup {t_np / t_nb:6.1f}x  identical={np.array_equal(o_nb, o_np)}")


def bench_gray(n, repeat):
    g = generate_random_regular(n, 3, seed=0)
    us, vs, ws = g.edge_array
    kernels._gray_min_numba(n, us, vs, ws)
    t_nb, r_nb = best_of(lambda: kernels._gray_min_numba(n, us, vs, ws), repeat)
    t_np, r_np = best_of(lambda: kernels._gray_min_numpy(n, us, vs, ws), 1)
    same = r_nb[1] == r_np[1] and abs(r_nb[0] - r_np[0]) < 1e-9
    print(f"min cut    N={n}: numba {t_nb:8.3f}s  numpy {t_np:8.3f}s  speedup {t_np / t_nb:6.1f}x  same={same}")


def bench_softplus(rows, m, repeat):
    rng = np.random.default_rng(2)
    theta = 3 * (rng.normal(size=(rows, m)) + 1j * rng.normal(size=(rows, m)))
    kernels._softplus_rows_numba(theta)
    t_nb, o_nb = best_of(lambda: kernels._softplus_rows_numba(theta), repeat)
    t_np, o_np = best_of(lambda: kernels._softplus_rows_numpy(theta), repeat)
    dev = float(np.max(np.abs(o_nb - o_np)))
    print(f"softplus   {rows}x{m}: numba {t_nb:8.3f}s  numpy {t_np:8.3f}s  speedup {t_np / t_nb:6.1f}x"
          f"  max deviation {dev:.1e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=12)
    ap.add_argument("--hidden", type=int, default=18)
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--gray-n", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not USE_NUMBA:
        print("numba disabled (QAOARBM_DISABLE_NUMBA); nothing to compare")
        return
    bench_chains(args.n, args.hidden, args.samples, args.repeat, -1)
    bench_chains(args.n, args.hidden, args.samples, args.repeat, 0)
    bench_gray(args.gray_n, args.repeat)
    bench_softplus(20000, args.hidden, args.repeat)


if __name__ == "__main__":
    main()
