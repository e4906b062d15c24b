"""Compare the compiled kernels with the numpy fallback.

Run ``python3 benchmarks/bench_kernels.py [--sizes 256 1024 2048] [--repeat 3]``.
Prints the best wall time per kernel and backend, the speedup and the max
absolute difference between the two results.
"""

from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from dyadlab import _pykernels as py
from dyadlab.lattice import Grid

try:
    from dyadlab import _ckernels as cy
except ImportError:  # extension not built
    cy = None


def cases(n_cells: int, dim: int):
    L = int(round(np.log2(n_cells) / dim))
    g = Grid(dim, L)
    x = g.cell_centers()
    rng = np.random.default_rng(0)
    m = rng.random(g.num_cells)
    delta = 2 * g.cell_diameter
    cubes = x[:: max(1, g.num_cells // 256)]
    sides = np.full(cubes.shape[0], 4 * g.cell_side)
    kind = py.KIND_HILBERT if dim == 1 else py.KIND_RIESZ
    return g.num_cells, [
        ("kernel_matrix", lambda k: k.kernel_matrix(x, x, kind, 0.0, 0, delta, 2.0, 0.25, True)),
        ("poisson_sums", lambda k: k.poisson_sums(cubes, sides, x, m, 0.0, 1.0, False)),
        ("frac_potential", lambda k: k.frac_potential(x, x, m, 0.5)),
    ]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 1024, 2048])
    ap.add_argument("--dim", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if cy is None:
        print("compiled extension not available; build with pip install -e . --no-build-isolation")
        return 1
    print(f"{'kernel':16s} {'cells':>6s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s} {'max diff':>10s}")
    for size in args.sizes:
        cells, items = cases(size, args.dim)
        for name, fn in items:
            tp = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat))
            tc = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat))
            diff = float(np.max(np.abs(np.asarray(fn(py)) - np.asarray(fn(cy)))))
            print(f"{name:16s} {cells:6d} {tp:10.4f} {tc:10.4f} {tp / tc:8.2f} {diff:10.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
