"""Seeded random streams, Gaussian sampling and a symmetric eigensolver.

Vectors and matrices are plain float64 numpy arrays. Randomness comes from
SplitMix64 used as a counter-based generator: every stream is identified by
a 64-bit key, and output ``i`` of a stream is a pure function of
``(key, i)``. Child streams are derived from a parent key and an integer
path, which lets the optimizer address the randomness of node ``j`` in
gossip round ``(t, q)`` directly without replaying earlier draws.
"""
from __future__ import annotations

import math

import numpy as np

from delicoco import kernels
from delicoco.errors import ContractViolation

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

# Sub-stream offsets derived from a master seed.
DATA_STREAM = 1
COMPRESSION_STREAM = 2
INIT_STREAM = 3

_TWO_NEG_53 = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SeededRng:
    """A position in a SplitMix64 stream.

    ``SeededRng(seed)`` keys the root stream with ``mix64(seed)``. Draws
    advance an internal counter; :meth:`spawn` derives an independent child
    stream (counter reset to zero) without touching the parent's counter.
    """

    algorithm = "splitmix64"

    def __init__(self, seed: int, *, key: int | None = None):
        self.seed = int(seed) & MASK64
        self.key = mix64(self.seed) if key is None else int(key) & MASK64
        self.counter = 0

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, key={self.key:#018x}, counter={self.counter})"

    def spawn(self, *path: int) -> SeededRng:
        key = self.key
        for p in path:
            key = mix64(key ^ mix64((int(p) + 1) * GOLDEN))
        return SeededRng(self.seed, key=key)

    def child_keys(self, count: int) -> np.ndarray:
        """Keys for ``count`` sibling streams: the first outputs of a spawned stream."""
        return kernels.splitmix64_block(
            np.array([mix64(self.key ^ GOLDEN)], dtype=np.uint64), 0, count
        )[0]

    def bits(self, count: int) -> np.ndarray:
        out = kernels.splitmix64_block(
            np.array([self.key], dtype=np.uint64), self.counter, count
        )[0]
        self.counter += count
        return out

    def uniform(self, size) -> np.ndarray:
        """Uniform doubles on [0, 1) with 53 random bits each."""
        shape = (size,) if isinstance(size, int) else tuple(size)
        count = math.prod(shape)
        return bits_to_unit(self.bits(count)).reshape(shape)

    def normal(self, size) -> np.ndarray:
        shape = (size,) if isinstance(size, int) else tuple(size)
        count = math.prod(shape)
        pairs = (count + 1) // 2
        u = bits_to_unit(self.bits(2 * pairs))
        return box_muller(u[0::2], u[1::2])[:count].reshape(shape)


def bits_to_unit(bits: np.ndarray) -> np.ndarray:
    return (bits >> np.uint64(11)).astype(np.float64) * _TWO_NEG_53


def box_muller(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Map uniform pairs on [0, 1) to interleaved standard normals.

    Both outputs of each pair are used: ``[r cos(2 pi u2), r sin(2 pi u2), ...]``
    with ``r = sqrt(-2 log(1 - u1))``.
    """
    r = np.sqrt(-2.0 * np.log1p(-u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * u1.shape[0])
    out[0::2] = r * np.cos(angle)
    out[1::2] = r * np.sin(angle)
    return out


def randn(rng: SeededRng, rows: int, cols: int) -> np.ndarray:
    """Matrix of i.i.d. standard normals, filled in row-major order."""
    if rows < 1 or cols < 1:
        raise ContractViolation(f"randn needs rows, cols >= 1, got {rows}x{cols}")
    return rng.normal((rows, cols))


def eig_sym(m, *, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Returned in descending order of absolute value. Magnitudes equal to
    within ``1e-12`` of the largest are ties, ordered larger value first.
    """
    a = np.array(m, dtype=np.float64, order="C", copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ContractViolation(f"eig_sym needs a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractViolation("eig_sym input has non-finite entries")
    scale = max(np.max(np.abs(a)), np.finfo(float).tiny)
    if np.max(np.abs(a - a.T)) > 1e-12 * scale:
        raise ContractViolation("eig_sym input is not symmetric")
    a = 0.5 * (a + a.T)
    tol = np.finfo(float).eps * float(np.linalg.norm(a))
    vals, _ = kernels.jacobi_eigenvalues(a, tol, max_sweeps)
    mags = np.abs(vals)
    top = mags.max()
    mags = np.round(mags / top, 12) if top > 0 else mags
    order = np.lexsort((-vals, -mags))
    return vals[order]


def power_iteration(matvec, dim: int, *, iters: int = 2000, tol: float = 1e-12, seed: int = 0) -> float:
    """Largest-magnitude eigenvalue estimate of a symmetric operator (Rayleigh quotient)."""
    v = SeededRng(seed).spawn(INIT_STREAM).normal(dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = matvec(v)
        new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(new - lam) <= tol * max(abs(new), 1.0):
            return new
        lam = new
    return lam
