"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np

_ROW_BUDGET = 1 << 22  # elements of the (rows, L, n) scratch block


def hs_weighted_sums(g, r, n, threads=1):
    g = np.ascontiguousarray(g, dtype=float)
    r = np.ascontiguousarray(r, dtype=float)
    L = r.shape[0]
    if g.shape[1] < L + n + 1:
        raise ValueError("moment table too short for the requested sums")
    l = np.arange(1, L + 1)[:, None]
    k = np.arange(1, n + 1)[None, :]
    diff_idx = np.abs(l - k)
    sum_idx = l + k
    out = np.empty(g.shape[0])
    step = max(1, _ROW_BUDGET // max(1, L * n))
    for start in range(0, g.shape[0], step):
        blk = g[start:start + step]
        G = blk[:, diff_idx] - blk[:, sum_idx]
        out[start:start + step] = np.einsum("blk,l->b", G * G, r)
    return out
