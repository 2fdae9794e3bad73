"""Compare the numba and pure-numpy kernels on the hot paths.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each row reports the median wall time per call (ms) and the max abs
difference between the two backends' outputs.
"""
import argparse
import timeit

import numpy as np

from hstqgcn import _kernels
from hstqgcn.quantum import qgcn_circuit


def _median_ms(fn, repeat, number):
    return 1e3 * float(np.median(timeit.repeat(fn, repeat=repeat, number=number))) / number


def cases(rng):
    for n in (4, 8, 10):
        c = qgcn_circuit(n, 2)
        ang = rng.uniform(-np.pi, np.pi, len(c))
        args = (c.ops, c.wire_a, c.wire_b, ang, n)
        gz = rng.normal(size=n)
        rows = rng.uniform(-np.pi, np.pi, (32, len(c)))
        yield f"simulate n={n}", lambda k, a=args: k.simulate(*a, False)[0]
        yield f"adjoint_grad n={n}", lambda k, a=args, g=gz: k.adjoint_grad(*a, k.simulate(*a, False)[0], g)
        yield f"simulate_batch n={n} x32", lambda k, c=c, r=rows, n=n: k.simulate_batch(c.ops, c.wire_a, c.wire_b, r, n)
    lon, lat = rng.uniform(-8.7, -8.5, 800), rng.uniform(41.1, 41.2, 800)
    yield "pairwise_haversine N=800", lambda k: k.pairwise_haversine(np.radians(lon), np.radians(lat), 6371.0)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=3)
    args = ap.parse_args()
    nb, npk = _kernels.numba_kernels, _kernels.numpy_kernels
    if nb is None:
        raise SystemExit("numba unavailable or disabled (HSTQGCN_DISABLE_NUMBA); nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}{'max diff':>12}")
    for name, fn in cases(rng):
        diff = float(np.max(np.abs(fn(nb) - fn(npk))))  # also warms the jit
        t_np = _median_ms(lambda: fn(npk), args.repeat, args.number)
        t_nb = _median_ms(lambda: fn(nb), args.repeat, args.number)
        print(f"{name:<28}{t_np:>12.3f}{t_nb:>12.3f}{t_np / t_nb:>9.1f}x{diff:>12.1e}")


if __name__ == "__main__":
    main()
