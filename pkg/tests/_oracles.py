"""Independent reference computations used to pin the library's results.

Kept deliberately naive: plain Python loops where feasible, int64 math with a
final truncation where loop speed matters (the two are cross-checked against
each other in test_kernels).
"""

import numpy as np

M32 = 1 << 32


def wrap32(v):
    return (int(v) + (1 << 31)) % M32 - (1 << 31)


def dot_loop(x, w):
    """Literal scalar loop: out[o] = sum_i w[i][o] * x[i], wrapping int32."""
    n_in = len(x)
    n_out = len(w[0]) if n_in else 0
    out = []
    for o in range(n_out):
        acc = 0
        for i in range(n_in):
            acc = wrap32(acc + int(w[i][o]) * int(x[i]))
        out.append(acc)
    return out


def dot_wide(x, w):
    """int64 accumulate then truncate; equals dot_loop by modular arithmetic."""
    prod = np.asarray(w, dtype=np.int64) * np.asarray(x, dtype=np.int64)[:, None]
    s = prod.sum(axis=0)
    return ((s + (1 << 31)) % M32 - (1 << 31)).astype(np.int64)
