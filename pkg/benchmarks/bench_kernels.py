"""Compiled kernels vs. the numpy fallback on representative problem sizes.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints the best-of-N wall time per kernel for each backend and the speedup.
"""
import argparse
import timeit

import numpy as np

from harfuse import _pykernels

try:
    from harfuse import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    a = rng.normal(size=(64, 64))
    sym = a + a.T
    spd = a @ a.T + 64 * np.eye(64)
    img = rng.random((24, 52))
    kern = rng.normal(size=(15, 15))
    X = rng.normal(size=(600, 256))
    Y = -np.ones((600, 6))
    Y[np.arange(600), rng.integers(0, 6, 600)] = 1.0
    order = rng.permutation(600).astype(np.int64)
    tol = 1e-12 * np.linalg.norm(sym)

    def jacobi(k):
        return lambda: k.jacobi_eigh(sym.copy(), sched[k], tol, 100)

    sched = {}
    out = {}
    for k in filter(None, (_pykernels, _ckernels)):
        sched[k] = np.ascontiguousarray(k.jacobi_schedule(64), dtype=np.int64)
        out.setdefault("jacobi_eigh 64x64", {})[k.NAME] = jacobi(k)
        out.setdefault("cholesky_lower 64x64", {})[k.NAME] = lambda k=k: k.cholesky_lower(spd, 0.0)
        out.setdefault("conv2d_same 24x52 * 15x15", {})[k.NAME] = lambda k=k: k.conv2d_same(img, kern)
        out.setdefault("hinge_sgd_epoch 600x256, 6 classes", {})[k.NAME] = (
            lambda k=k: k.hinge_sgd_epoch(X, Y, order, 1e-3, np.zeros((6, 256)), np.zeros(6), 0)
        )
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _ckernels is None:
        print("compiled extension not built; timing the numpy fallback only")
    rng = np.random.default_rng(0)
    names = [k.NAME for k in filter(None, (_pykernels, _ckernels))]
    print(f"{'kernel':<38}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}")
    for label, fns in cases(rng).items():
        t = {n: min(timeit.repeat(fns[n], number=1, repeat=args.repeat)) for n in names}
        row = f"{label:<38}" + "".join(f"{t[n] * 1e3:>10.2f}ms" for n in names)
        if len(names) == 2:
            row += f"{t[names[0]] / t[names[1]]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
