"""Throughput benchmark: numba kernels vs the pure-numpy fallback.

Runs the same ensemble (identical seeds, identical config) under both
backends, reports path-steps per second, and checks that the two drivers
produce the same trajectories.  The backend is chosen per run through the
SGNS_BACKEND environment variable, exactly as in production.

Usage:
    python3 benchmarks/bench_kernels.py [--paths 2000] [--steps 200]
                                        [--cutoffs 4 8 16] [--repeat 3]
"""

from __future__ import annotations

import argparse
import os
import time

import numpy as np

from sgns.basis import CovarianceSpec, enumerate_basis, random_field
from sgns.engine import IntegratorConfig, NoiseStreams, run_ensemble


def run_once(backend: str, cutoff: int, n_paths: int, n_steps: int, dt: float):
    os.environ["SGNS_BACKEND"] = backend
    basis = enumerate_basis(2, cutoff)
    cov = CovarianceSpec(alpha=2.5)
    cfg = IntegratorConfig(dt=dt)
    x0 = random_field(basis, np.random.default_rng(1), decay=1.0, norm=1.0)
    t_final = n_steps * dt
    start = time.perf_counter()
    res = run_ensemble(
        x0, cov, cfg, t_final, n_paths, NoiseStreams(12345),
        record_times=[t_final], record_coords=[0, 1, 2],
    )
    elapsed = time.perf_counter() - start
    return elapsed, res.coords[:, :, -1].copy()


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--paths", type=int, default=2000)
    parser.add_argument("--steps", type=int, default=200)
    parser.add_argument("--dt", type=float, default=0.005)
    parser.add_argument("--cutoffs", type=int, nargs="+", default=[4, 8, 16])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    saved = os.environ.get("SGNS_BACKEND")
    print(f"{'cutoff':>6} {'backend':>8} {'best (s)':>10} "
          f"{'us/path-step':>13} {'speedup':>8}")
    try:
        for cutoff in args.cutoffs:
            work = args.paths * args.steps
            best: dict[str, float] = {}
            coords: dict[str, np.ndarray] = {}
            for backend in ("numba", "numpy"):
                # warm-up run compiles the jitted kernels
                run_once(backend, cutoff, 8, 4, args.dt)
                times = []
                for _ in range(args.repeat):
                    elapsed, c = run_once(
                        backend, cutoff, args.paths, args.steps, args.dt
                    )
                    times.append(elapsed)
                best[backend] = min(times)
                coords[backend] = c
            diff = float(np.max(np.abs(coords["numba"] - coords["numpy"])))
            for backend in ("numba", "numpy"):
                speedup = best["numpy"] / best[backend]
                print(f"{cutoff:>6} {backend:>8} {best[backend]:>10.3f} "
                      f"{1e6 * best[backend] / work:>13.2f} {speedup:>8.2f}")
            print(f"{'':>6} max |numba - numpy| at T: {diff:.3e}")
    finally:
        if saved is None:
            os.environ.pop("SGNS_BACKEND", None)
        else:
            os.environ["SGNS_BACKEND"] = saved


if __name__ == "__main__":
    main()
