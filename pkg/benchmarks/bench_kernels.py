"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported directly, so the extension must be built
(``pip install -e . --no-build-isolation``). Results are also checked for
bit-identical output.
"""
import argparse
import timeit

import numpy as np

from delicoco import _pykernels

try:
    from delicoco import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    keys = np.arange(1, 65, dtype=np.uint64)
    sym = rng.standard_normal((60, 60))
    sym = sym + sym.T
    tol = np.finfo(float).eps * np.linalg.norm(sym)
    x = rng.standard_normal((2000, 16))
    norms = np.sqrt(np.einsum("ij,ij->j", x, x))
    u = rng.random(x.shape)
    w = 1 + min(np.sqrt(2000) / 4, 2000 / 16)
    return {
        "splitmix64 64x4096": lambda k: k.splitmix64_block(keys, 0, 4096),
        "jacobi 60x60": lambda k: k.jacobi_eigenvalues(sym.copy(), tol, 60)[0],
        "topk d=2000 n=16 k=100": lambda k: k.topk_mask(x, 100),
        "qsgd d=2000 n=16 b=2": lambda k: k.qsgd_quantize(x, norms, u, 4.0, w),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels is None:
        raise SystemExit("compiled extension not built; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'python ms':>12}{'cython ms':>12}{'speedup':>10}  identical")
    for name, fn in cases(rng).items():
        times = {}
        for label, mod in (("python", _pykernels), ("cython", _kernels)):
            number = max(1, int(0.2 / max(timeit.timeit(lambda: fn(mod), number=1), 1e-6)))
            best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat))
            times[label] = 1e3 * best / number
        same = np.array_equal(fn(_pykernels), fn(_kernels))
        print(f"{name:<26}{times['python']:>12.3f}{times['cython']:>12.3f}"
              f"{times['python'] / times['cython']:>10.1f}  {same}")


if __name__ == "__main__":
    main()
