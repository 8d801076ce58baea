"""Benchmark: compiled grid-operator kernel vs the pure-numpy fallback.

Runs the hot slice update (golden-section maximization over the traded
proportion at every wealth node) on realistic workspace sizes and reports
per-call timings plus the max discrepancy between the two backends.

Usage: python benchmarks/bench_gridops.py [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from illiquid import _gridpy
from illiquid.arrivals import IntensityProfile
from illiquid.dp import DPSolver, SolverConfig
from illiquid.market import MarketModel
from illiquid.utility import power_utility

try:
    from illiquid import _gridcore
except ImportError:
    _gridcore = None


def make_workspace(n_t=80, n_x=64, tq=32, rq=16):
    u = power_utility(0.5)
    model = MarketModel.from_constants(1.0, 0.05, 0.2)
    prof = IntensityProfile(1.0)
    cfg = SolverConfig(time_nodes=n_t, wealth_nodes=n_x, time_quad=tq, return_quad=rq)
    solver = DPSolver(u, model, prof, cfg, representation="grid")
    surface = solver.initial_surface()
    j = n_t // 2
    W = ((1.0 - solver.tfrac[j])[:, None] * surface.values[solver.idx[j]]
         + solver.tfrac[j][:, None] * surface.values[solver.idx[j] + 1])
    return (np.ascontiguousarray(W), solver.gross[j], solver.wq[j], solver.lx,
            1, 0.5, None, 1e-6)


def bench(fn, args, repeat):
    fn(*args)  # warm up
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    for shape in [(80, 48, 32, 16), (120, 64, 48, 24), (200, 96, 64, 40)]:
        ws = make_workspace(*shape)
        n_t, n_x, tq, rq = shape
        label = f"Nt={n_t} Nx={n_x} tq={tq} rq={rq}"
        t_py = bench(_gridpy.apply_slice, ws, args.repeat)
        line = f"{label:34s} python {t_py * 1e3:8.2f} ms"
        if _gridcore is not None:
            t_c = bench(_gridcore.apply_slice, ws, args.repeat)
            v_py, p_py = _gridpy.apply_slice(*ws)
            v_c, p_c = _gridcore.apply_slice(*ws)
            dv = float(np.max(np.abs(v_py - v_c)))
            dp = float(np.max(np.abs(p_py - p_c)))
            line += (f"   compiled {t_c * 1e3:8.2f} ms   speedup {t_py / t_c:5.1f}x"
                     f"   max|dv|={dv:.2e} max|dpi|={dp:.2e}")
        else:
            line += "   (compiled backend unavailable)"
        print(line)


if __name__ == "__main__":
    main()
