"""Compare the compiled and pure-Python rollout kernels.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``. Prints median wall time per
call and the largest absolute difference between the two backends for each workload.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from wsmpc import _core
from wsmpc.plants import lorenz_model, quadrotor_model, QUAD, hover_state

WORKLOADS = {
    # name: (model factory, x0, batch, horizon, substeps, h)
    "lorenz batch": (lambda: lorenz_model().kernel_model(), np.array([-8.0, 8.0, 27.0]),
                     21, 10, 10, 1e-3),
    "quadrotor batch": (lambda: quadrotor_model().kernel_model(), hover_state((1.2, 0.0, 1.5)),
                        9, 16, 5, 0.01),
}


def run(repeat: int = 5) -> list:
    rng = np.random.default_rng(0)
    rows = []
    backends = _core.available_backends()
    for name, (make, x0, B, K, nsub, h) in WORKLOADS.items():
        km = make()
        V = km.input_dim
        U = rng.normal(size=(B, K, V))
        if name.startswith("quadrotor"):
            U[..., 0] = QUAD.mass * QUAD.g + 0.5 * U[..., 0]
            U[..., 1:] *= 0.01
        out, times = {}, {}
        for be in backends:
            out[be] = _core.rollout_zoh(km, x0, U, h, nsub, be)[0]
            t = timeit.repeat(lambda: _core.rollout_zoh(km, x0, U, h, nsub, be),
                              number=1, repeat=repeat)
            times[be] = float(np.median(t))
        diff = (float(np.nanmax(np.abs(out["cython"] - out["python"])))
                if len(backends) == 2 else float("nan"))
        rows.append((name, times, diff))
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    for name, times, diff in run(args.repeat):
        parts = "  ".join(f"{be}: {1e3 * t:8.3f} ms" for be, t in times.items())
        speed = (f"  speedup x{times['python'] / times['cython']:.1f}"
                 if "cython" in times and "python" in times else "")
        print(f"{name:16s} {parts}{speed}  max|diff| = {diff:.2e}")


if __name__ == "__main__":
    main()
