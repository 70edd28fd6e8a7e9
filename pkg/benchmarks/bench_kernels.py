"""Compare the compiled kernels with the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--full-run]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from thermovisco import kernels
from thermovisco.config import builtin_config, load_config
from thermovisco.materials import MaterialParams
from thermovisco.scheme import run


def _best_time(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def kernel_inputs(n_cells: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    F0 = np.tile([1.0, 0.0, 0.0, 1.0], (n_cells, 1)) + 0.05 * rng.standard_normal((n_cells, 4))
    F = F0 + 0.01 * rng.standard_normal((n_cells, 4))
    beta = rng.uniform(0.3, 0.7, n_cells)
    acoef = rng.uniform(1.0, 2.0, n_cells)
    L = rng.standard_normal((n_cells, 2))
    return F, F0, beta, acoef, L


def bench(repeat: int, full_run: bool) -> list[tuple[str, float, float]]:
    mp = MaterialParams()
    rows = []
    for n in (16, 32, 64):
        F, F0, beta, acoef, L = kernel_inputs((n - 1) ** 2)
        args = (F, F0, beta, acoef, 320.0, mp.mu, mp.gamma, mp.q_det, mp.alpha)
        times = [_best_time(lambda b=b: kernels.cell_mech(*args, backend=b), repeat)
                 for b in ("python", "compiled")]
        rows.append((f"cell_mech n={n}", *times))
        times = [_best_time(lambda b=b: kernels.node_strain_gradient(L, mp.p, mp.crossover, backend=b), repeat)
                 for b in ("python", "compiled")]
        rows.append((f"node_strain_gradient n={n}", *times))
    if full_run:
        config = load_config(builtin_config("reference"))
        times = [_best_time(lambda b=b: run(config, backend=b, audit=False), 1) for b in ("python", "compiled")]
        rows.append(("reference run (32 steps)", *times))
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--full-run", action="store_true")
    args = parser.parse_args(argv)
    if not kernels.compiled_available():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    print(f"{'case':32s} {'python [ms]':>12s} {'compiled [ms]':>14s} {'speedup':>8s}")
    for name, t_py, t_c in bench(args.repeat, args.full_run):
        print(f"{name:32s} {1e3 * t_py:12.3f} {1e3 * t_c:14.3f} {t_py / t_c:8.1f}x")


if __name__ == "__main__":
    main()
