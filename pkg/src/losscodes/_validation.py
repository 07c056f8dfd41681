"""Input validation helpers shared by the public entry points."""

import numbers

import numpy as np


def check_dims(d, s, r=None):
    """Validate local dimension and particle counts; returns ints."""
    for name, v in (("d", d), ("s", s)) + ((("r", r),) if r is not None else ()):
        if not isinstance(v, numbers.Integral) or isinstance(v, bool):
            raise TypeError(f"{name} must be an integer, got {v!r}")
    if d < 2:
        raise ValueError(f"local dimension d must be >= 2, got {d}")
    if s < 0:
        raise ValueError(f"s must be non-negative, got {s}")
    if r is None:
        return int(d), int(s)
    if r < 0 or r > s:
        raise ValueError(f"need 0 <= r <= s, got r={r}, s={s}")
    return int(d), int(s), int(r)


def check_probability(p, name="p_dist", allow_zero=False):
    p = float(p)
    lo_ok = p >= 0 if allow_zero else p > 0
    if not (lo_ok and p <= 1):
        bound = "[0, 1]" if allow_zero else "(0, 1]"
        raise ValueError(f"{name} must lie in {bound}, got {p}")
    return p


def check_symmetric(a, name="matrix", atol=1e-9):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, atol=atol):
        raise ValueError(f"{name} is not symmetric")
    return a


def min_eigenvalue(a):
    return float(np.linalg.eigvalsh((a + a.T) / 2)[0])


def check_grid(grid, step=0.01):
    """Probability grid: strictly increasing, inside (0, 1], on multiples of ``step``."""
    g = np.atleast_1d(np.asarray(grid, dtype=float)).ravel()
    if g.size == 0:
        raise ValueError("probability grid is empty")
    if np.any(np.diff(g) <= 0):
        raise ValueError("probability grid must be strictly increasing")
    for p in g:
        check_probability(p)
    k = g / step
    if not np.allclose(k, np.round(k), atol=1e-6):
        raise ValueError(f"grid points must be multiples of {step}")
    return np.round(np.round(k) * step, 10)


def check_random_state(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
