# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.  Must agree with ``_kernels_py`` to rounding."""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()


def hs_weighted_sums(double[:, ::1] g, double[::1] r, Py_ssize_t n, int threads=1):
    """sum_l r[l-1] * sum_{k<=n} (g[|l-k|] - g[l+k])**2 for every row of g."""
    cdef Py_ssize_t rows = g.shape[0]
    cdef Py_ssize_t L = r.shape[0]
    if g.shape[1] < L + n + 1:
        raise ValueError("moment table too short for the requested sums")
    out = np.zeros(rows)
    cdef double[::1] res = out
    cdef Py_ssize_t b, l, k, d
    cdef double acc, inner, diff
    if threads < 1:
        threads = 1
    for b in prange(rows, nogil=True, schedule="static", num_threads=threads):
        acc = 0.0
        for l in range(1, L + 1):
            inner = 0.0
            for k in range(1, n + 1):
                d = l - k
                if d < 0:
                    d = -d
                diff = g[b, d] - g[b, l + k]
                inner = inner + diff * diff
            acc = acc + r[l - 1] * inner
        res[b] = acc
    return out
