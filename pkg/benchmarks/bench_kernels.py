"""Time the numba and numpy surface kernels on the same problem.

    python3 benchmarks/bench_kernels.py [--grid 32] [--params 200] [--quad 48,48]

Both paths are called through the projector with an explicit
``use_numba`` switch; the numba path is warmed up once so that JIT compile
time is reported separately.
"""
import argparse
import time

import numpy as np

from spindle_radon._accel import HAVE_NUMBA
from spindle_radon.geometry import QuadratureSpec
from spindle_radon.transforms import RestrictedParams, SurfaceProjector
from spindle_radon.volume import GridSpec, VoxelGrid


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=32)
    ap.add_argument("--params", type=int, default=200)
    ap.add_argument("--quad", default="48,48")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    spec = GridSpec.from_bounds(args.grid, (-1.5, -1.5, 1.0), (1.5, 1.5, 4.0))
    vol = VoxelGrid(spec, rng.random(spec.dims))
    plist = [RestrictedParams(p, x, y) for p, x, y in zip(rng.uniform(0.5, 20, args.params),
                                                           rng.uniform(-1, 1, args.params),
                                                           rng.uniform(-1, 1, args.params))]
    proj = SurfaceProjector(plist, "apple", QuadratureSpec.parse(args.quad), threads=1)
    data = rng.random(len(proj))

    if HAVE_NUMBA:
        t0 = time.perf_counter()
        proj.forward(vol, use_numba=True)
        proj.adjoint(data, spec, use_numba=True)
        print(f"numba compile + first call: {time.perf_counter() - t0:.3f} s")

    print(f"grid {args.grid}^3, {len(proj)} surfaces, quadrature {args.quad}")
    results = {}
    routes = [("numpy", False)] + ([("numba", True)] if HAVE_NUMBA else [])
    for name, flag in routes:
        tf, fwd = _time(lambda: proj.forward(vol, use_numba=flag), args.repeat)
        ta, adj = _time(lambda: proj.adjoint(data, spec, use_numba=flag), args.repeat)
        results[name] = (fwd, adj.values)
        print(f"{name:>6}: forward {tf * 1e3:9.2f} ms   adjoint {ta * 1e3:9.2f} ms")
    if len(results) == 2:
        (f0, a0), (f1, a1) = results["numpy"], results["numba"]
        print(f"max relative difference: forward {np.abs(f0 - f1).max() / np.abs(f0).max():.2e}, "
              f"adjoint {np.abs(a0 - a1).max() / np.abs(a0).max():.2e}")


if __name__ == "__main__":
    main()
