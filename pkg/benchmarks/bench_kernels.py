"""Time the numba and numpy flavours of the O(M^2) kernels side by side.

    python3 benchmarks/bench_kernels.py [--steps 1024] [--modes 32] [--repeat 3]

The first numba call (JIT compile, or a cache load) is excluded from the
timings.  Both flavours are also checked to return the same numbers.  The
flows kernel is where numpy wins: it advances every live source in one
matrix product, which is why ``flows_from_sources`` always takes that route.
"""

import argparse
import time

import numpy as np

from fracheat import _accel, kernels
from fracheat.fbm import sample_path
from fracheat.solver import CoefficientMap, averaging_kernel, default_family, solve
from fracheat.spectral import SpectralField, eigenvalues, semigroup_factors, sobolev_weights


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(steps, modes):
    x = sample_path(steps, 0.75, dim=2, seed=1)
    fam, L = default_family(2), averaging_kernel(modes)
    phi = SpectralField.from_function(lambda u: 0.5 * np.sin(np.pi * u), modes)
    Y = solve(phi, fam, L, x)
    cmap = CoefficientMap.build(fam, L, modes)
    w = sobolev_weights(modes, 2.7)
    lam = eigenvalues(modes)
    sources = np.arange(0, steps + 1, max(1, steps // 64))
    flow_args = (semigroup_factors(modes, x.dt), cmap.A, cmap.B,
                 cmap.node_derivatives(Y.coeffs[:-1], 1), x.increments(),
                 cmap.G(Y.coeffs[sources]), sources)
    return {
        "holder_scan": (kernels.holder_scan_numba, kernels.holder_scan_numpy,
                        (x.values, x.times, 0.7)),
        "field_scan": (kernels.field_scan_numba, kernels.field_scan_numpy,
                       (Y.coeffs, w, lam, x.dt, 0.45)),
        "flows": (kernels.flows_numba, kernels.flows_numpy, flow_args),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=1024)
    ap.add_argument("--modes", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"M={args.steps} steps, N={args.modes} modes, best of {args.repeat}")
    print(f"{'kernel':<12} {'numba [s]':>10} {'numpy [s]':>10} {'speedup':>8} {'rel diff':>10}")
    for name, (fast, slow, fargs) in cases(args.steps, args.modes).items():
        fast(*fargs)  # compile
        t_fast, a = best_of(lambda: fast(*fargs), args.repeat)
        t_slow, b = best_of(lambda: slow(*fargs), args.repeat)
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        diff = float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))
        print(f"{name:<12} {t_fast:>10.4f} {t_slow:>10.4f} {t_slow / t_fast:>8.1f} {diff:>10.2e}")


if __name__ == "__main__":
    main()
