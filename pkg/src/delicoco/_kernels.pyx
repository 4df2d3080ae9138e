# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels with results bit-identical to ``_pykernels``."""
import numpy as np

from libc.math cimport sqrt, fabs, floor
from libc.stdint cimport uint64_t
from libc.stdlib cimport malloc, free

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9
cdef uint64_t MIX2 = 0x94D049BB133111EB


def splitmix64_block(keys, Py_ssize_t start, Py_ssize_t count):
    cdef const uint64_t[::1] kv = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef Py_ssize_t r, i, nk = kv.shape[0]
    out = np.empty((nk, count), dtype=np.uint64)
    cdef uint64_t[:, ::1] o = out
    cdef uint64_t z
    with nogil:
        for r in range(nk):
            for i in range(count):
                z = kv[r] + <uint64_t>(start + i + 1) * GOLDEN
                z = (z ^ (z >> 30)) * MIX1
                z = (z ^ (z >> 27)) * MIX2
                o[r, i] = z ^ (z >> 31)
    return out


def jacobi_eigenvalues(double[:, ::1] a, double tol, int max_sweeps):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t p, q, k
    cdef int sweep
    cdef bint rotated
    cdef double apq, theta, t, c, s, x, y
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if fabs(apq) <= tol:
                    continue
                rotated = True
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if fabs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    x = a[k, p]
                    y = a[k, q]
                    a[k, p] = c * x - s * y
                    a[k, q] = s * x + c * y
                for k in range(n):
                    x = a[p, k]
                    y = a[q, k]
                    a[p, k] = c * x - s * y
                    a[q, k] = s * x + c * y
                a[p, q] = 0.0
                a[q, p] = 0.0
        if not rotated:
            return np.asarray(a).diagonal().copy(), sweep
    return np.asarray(a).diagonal().copy(), max_sweeps


cdef double _kth_largest(double* a, Py_ssize_t n, Py_ssize_t k) noexcept nogil:
    """Quickselect: value of rank ``k`` (0-based) in descending order. Reorders ``a``."""
    cdef Py_ssize_t lo = 0, hi = n - 1, i, j
    cdef double pivot, tmp
    while lo < hi:
        pivot = a[(lo + hi) // 2]
        i = lo
        j = hi
        while i <= j:
            while a[i] > pivot:
                i += 1
            while a[j] < pivot:
                j -= 1
            if i <= j:
                tmp = a[i]
                a[i] = a[j]
                a[j] = tmp
                i += 1
                j -= 1
        if k <= j:
            hi = j
        elif k >= i:
            lo = i
        else:
            break
    return a[k]


def topk_mask(x, Py_ssize_t k):
    cdef const double[:, :] xv = np.asarray(x, dtype=np.float64)
    cdef Py_ssize_t d = xv.shape[0], n = xv.shape[1]
    cdef Py_ssize_t i, j, left
    cdef double t, v
    mask = np.zeros((d, n), dtype=np.uint8)
    cdef unsigned char[:, ::1] mv = mask
    if k <= 0 or d == 0:
        return mask.view(bool)
    if k > d:
        k = d
    cdef double* buf = <double*>malloc(d * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for j in range(n):
                for i in range(d):
                    buf[i] = fabs(xv[i, j])
                t = _kth_largest(buf, d, k - 1)
                # strictly larger entries first, then ties at the threshold by index
                left = k
                for i in range(d):
                    if fabs(xv[i, j]) > t:
                        mv[i, j] = 1
                        left -= 1
                for i in range(d):
                    if left == 0:
                        break
                    if fabs(xv[i, j]) == t:
                        mv[i, j] = 1
                        left -= 1
    finally:
        free(buf)
    return mask.view(bool)


def qsgd_quantize(x, norms, u, double levels, double w):
    cdef const double[:, :] xv = np.asarray(x, dtype=np.float64)
    cdef const double[:] nv = np.asarray(norms, dtype=np.float64)
    cdef const double[:, :] uv = np.asarray(u, dtype=np.float64)
    cdef Py_ssize_t d = xv.shape[0], n = xv.shape[1]
    cdef Py_ssize_t i, j
    cdef double scale, v, sgn
    out = np.zeros((d, n), dtype=np.float64)
    cdef double[:, ::1] ov = out
    with nogil:
        for j in range(n):
            if nv[j] <= 0.0:
                continue
            scale = nv[j] / (levels * w)
            for i in range(d):
                v = xv[i, j]
                if v > 0.0:
                    sgn = 1.0
                elif v < 0.0:
                    sgn = -1.0
                else:
                    sgn = 0.0
                ov[i, j] = sgn * scale * floor(levels * fabs(v) / nv[j] + uv[i, j])
    return out
