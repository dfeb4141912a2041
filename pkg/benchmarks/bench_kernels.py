"""Compare the compiled and numpy wave kernels.

    python benchmarks/bench_kernels.py [--sizes 256 1024 4096] [--repeat 5]

Times one right-hand-side evaluation per backend and grid size, then a
full 1D run on a 512-cell grid, and checks that both backends agree.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from jeans_blowup import _kernels_py
from jeans_blowup import reference_ode as ro
from jeans_blowup import wave_solver as ws
from jeans_blowup.model_core import ModelParameters

try:
    from jeans_blowup import _kernels as _compiled
except ImportError:
    _compiled = None

COEFFS = (0.1, 4.0, 0.25, 2 / 3, 4 / 3, 1.0, 4 / 3, 0.5, -1 / 3, 5 / 3)


def bench_rhs(fn, shape, repeat, number):
    rng = np.random.default_rng(0)
    rho = rng.uniform(0.1, 2.0, shape)
    v = rng.normal(size=shape)
    g = -rng.uniform(0.1, 0.9, shape)
    out = [np.zeros(shape) for _ in range(3)]
    t = timeit.repeat(lambda: fn(rho, v, g, *out, *COEFFS), repeat=repeat, number=number)
    return min(t) / number


def bench_run(backend, n_cells, repeat):
    p = ModelParameters()
    traj = ro.integrate(p)
    t_m = ro.estimate_blowup_time(traj)[0]
    data = ws.InitialData(eps=1e-3)
    grid = ws.GridConfig(n_cells=n_cells, backend=backend)
    result = {}

    def once():
        result["run"] = ws.run(p, data, grid, traj=traj, t_m=t_m)

    t = min(timeit.repeat(once, repeat=repeat, number=1))
    return t, result["run"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 1024, 4096, 16384])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--run-cells", type=int, default=512)
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled kernels not built; only the numpy fallback is available")

    print(f"{'kernel':<8}{'cells':>9}{'python [us]':>14}{'cython [us]':>14}{'speedup':>9}")
    for n in args.sizes:
        for dim, shape in ((1, (n + 4,)), (2, (int(n ** 0.5) + 4,) * 2)):
            name = f"rhs_{dim}d"
            number = max(1, 200000 // n)
            tp = bench_rhs(getattr(_kernels_py, f"wave_rhs_{dim}d"), shape, args.repeat, number)
            if _compiled is not None:
                tc = bench_rhs(getattr(_compiled, f"wave_rhs_{dim}d"), shape, args.repeat, number)
                print(f"{name:<8}{np.prod(shape):>9}{tp * 1e6:>14.2f}{tc * 1e6:>14.2f}{tp / tc:>9.2f}")
            else:
                print(f"{name:<8}{np.prod(shape):>9}{tp * 1e6:>14.2f}{'-':>14}{'-':>9}")

    tp, rp = bench_run("python", args.run_cells, max(1, args.repeat // 2))
    line = f"full run, {args.run_cells} cells: python {tp:.3f} s"
    if _compiled is not None:
        tc, rc = bench_run("cython", args.run_cells, max(1, args.repeat // 2))
        diff = float(np.max(np.abs(rp.rho - rc.rho) / (1 + np.abs(rp.rho))))
        line += f", cython {tc:.3f} s, speedup {tp / tc:.2f}, max rel difference {diff:.1e}"
    print(line)


if __name__ == "__main__":
    main()
