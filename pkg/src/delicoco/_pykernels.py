"""Pure numpy implementations of the numerical kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature
and the same floating point operation order, so both backends produce
bit-identical results (the extension is compiled with ``-ffp-contract=off``).
"""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)


def splitmix64_block(keys, start, count):
    """Outputs ``start .. start+count-1`` of the SplitMix64 stream of each key.

    Returns a ``(len(keys), count)`` uint64 array. Output ``i`` of key ``k``
    is ``mix(k + (i + 1) * GOLDEN)``, i.e. the standard SplitMix64 sequence
    seeded with ``k``, addressable at any counter position.
    """
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    ctr = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = keys[:, None] + ctr[None, :] * GOLDEN
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


def jacobi_eigenvalues(a, tol, max_sweeps):
    """Cyclic Jacobi rotations on a symmetric matrix.

    ``a`` is overwritten. Pairs with ``|a_pq| <= tol`` are skipped; iteration
    stops after the first sweep that performs no rotation. Returns the
    diagonal (unsorted) and the number of sweeps used.
    """
    n = a.shape[0]
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= tol:
                    continue
                rotated = True
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = 0.0
                a[q, p] = 0.0
        if not rotated:
            return np.diag(a).copy(), sweep
    return np.diag(a).copy(), max_sweeps


def topk_mask(x, k):
    """Boolean mask of the ``k`` largest-magnitude entries per column.

    Ties go to the lower row index.
    """
    d, n = x.shape
    order = np.argsort(-np.abs(x), axis=0, kind="stable")[:k]
    mask = np.zeros((d, n), dtype=bool)
    np.put_along_axis(mask, order, True, axis=0)
    return mask


def qsgd_quantize(x, norms, u, levels, w):
    """Column-wise stochastic quantization with precomputed column norms.

    Columns whose norm is zero map to zero.
    """
    out = np.zeros_like(x)
    live = norms > 0.0
    if not live.any():
        return out
    xs = x[:, live]
    nz = norms[live]
    scale = nz / (levels * w)
    out[:, live] = np.sign(xs) * scale[None, :] * np.floor(
        levels * np.abs(xs) / nz[None, :] + u[:, live]
    )
    return out
