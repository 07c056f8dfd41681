"""Symmetric-matrix vectorization and small linear-algebra helpers.

``svec`` uses the column-major upper triangle with off-diagonal entries
scaled by sqrt(2), so that ``svec(A) @ svec(B) == trace(A @ B)`` for
symmetric ``A`` and ``B``.  This is also the layout the conic backend
expects for semidefinite cones.
"""

from functools import lru_cache

import numpy as np

SQRT2 = np.sqrt(2.0)


def svec_len(n):
    return n * (n + 1) // 2


@lru_cache(maxsize=None)
def _triu_colmajor(n):
    rows, cols = [], []
    for j in range(n):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    rows = np.array(rows, dtype=int)
    cols = np.array(cols, dtype=int)
    scale = np.where(rows == cols, 1.0, SQRT2)
    return rows, cols, scale


def svec(a):
    a = np.asarray(a, dtype=float)
    rows, cols, scale = _triu_colmajor(a.shape[0])
    return a[rows, cols] * scale


def smat(v, n=None):
    v = np.asarray(v, dtype=float)
    if n is None:
        n = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    rows, cols, scale = _triu_colmajor(n)
    out = np.zeros((n, n))
    vals = v / scale
    out[rows, cols] = vals
    out[cols, rows] = vals
    return out


def svec_index(i, j, n):
    """Position of entry (i, j) of an order-n matrix inside ``svec``."""
    if i > j:
        i, j = j, i
    return j * (j + 1) // 2 + i


def linear_map_matrix(fn, n_in, n_out):
    """Matrix of a linear map between symmetric matrices in svec coordinates."""
    m = svec_len(n_in)
    out = np.empty((svec_len(n_out), m))
    for col in range(m):
        e = np.zeros(m)
        e[col] = 1.0
        out[:, col] = svec(fn(smat(e, n_in)))
    return out


def qubit_partial_trace(x, n):
    """Trace out the leading qubit of a (qubit x n) ordered matrix."""
    x4 = np.asarray(x).reshape(2, n, 2, n)
    return x4[0, :, 0, :] + x4[1, :, 1, :]


def psd_part(a):
    w, v = np.linalg.eigh((a + a.T) / 2)
    return (v * np.clip(w, 0, None)) @ v.T


def sqrtm_psd(a):
    w, v = np.linalg.eigh((a + a.T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T
