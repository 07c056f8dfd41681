"""Dicke-basis combinatorics and the reduced-space protocol evaluation.

States live on (Alice qubit) x (symmetric subspace of s qudits), maps on
(Bob output qubit) x (symmetric subspace of r qudits).  Both are stored
as real symmetric matrices whose row/column index is ``a * n + k`` with
``a`` the qubit and ``k`` the position of a Dicke index in
:func:`index_set`.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial, prod, sqrt

import numpy as np

from ._linalg import linear_map_matrix, qubit_partial_trace, svec
from ._validation import check_dims, check_symmetric, min_eigenvalue

# Bell state |Phi+> on (Alice, Bob), ordering index = 2 * a + b
PHI_PLUS = np.array([1.0, 0.0, 0.0, 1.0]) / np.sqrt(2.0)


def multinomial(s, i):
    """s! / prod(i_m!) if ``i`` is a valid occupation of s particles, else 0."""
    i = tuple(int(x) for x in np.atleast_1d(i))
    if any(x < 0 for x in i) or sum(i) != s:
        return 0
    return factorial(s) // prod(factorial(x) for x in i)


def _compositions(s, d):
    if d == 1:
        yield (s,)
        return
    for first in range(s, -1, -1):
        for rest in _compositions(s - first, d - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _index_set(s, d):
    return tuple(_compositions(s, d))


def index_set(s, d):
    """All occupation vectors of ``s`` particles on ``d`` levels.

    Ordered by descending occupation of level 0, then level 1, ...; for
    qubits position ``k`` is the Dicke state with ``k`` excitations.
    """
    if d < 2:
        raise ValueError(f"local dimension d must be >= 2, got {d}")
    if s < 0:
        raise ValueError(f"s must be non-negative, got {s}")
    return list(_index_set(int(s), int(d)))


@lru_cache(maxsize=None)
def index_positions(s, d):
    return {idx: pos for pos, idx in enumerate(_index_set(s, d))}


def dicke_dim(s, d):
    return comb(s + d - 1, d - 1)


def upper_triangle_size(d, s):
    """Number of free real coefficients of a SymmetricState."""
    n = 2 * dicke_dim(s, d)
    return n * (n + 1) // 2


@dataclass(frozen=True)
class SymmetricState:
    """Two-party state rho_{a1,a2}(i, j) in the (Alice qubit) x (Dicke) basis."""

    d: int
    s: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        check_dims(self.d, self.s)
        c = check_symmetric(self.coeffs, "state coefficients")
        n = 2 * dicke_dim(self.s, self.d)
        if c.shape != (n, n):
            raise ValueError(f"expected a {n}x{n} matrix for d={self.d}, s={self.s}, got {c.shape}")
        object.__setattr__(self, "coeffs", (c + c.T) / 2)

    @classmethod
    def from_vector(cls, d, s, psi):
        psi = np.asarray(psi, dtype=float)
        nrm = np.linalg.norm(psi)
        if nrm == 0:
            raise ValueError("state vector is zero")
        psi = psi / nrm
        return cls(d, s, np.outer(psi, psi))

    @classmethod
    def from_terms(cls, d, s, terms):
        """Pure state from ``{(a, occupation): amplitude}``; unnormalized input is normalized.

        For qubits the occupation may be the plain excitation count.
        """
        pos = index_positions(s, d)
        n = len(pos)
        psi = np.zeros(2 * n)
        for (a, occ), amp in terms.items():
            psi[a * n + pos[_as_occupation(occ, s, d)]] += amp
        return cls.from_vector(d, s, psi)

    @property
    def n(self):
        return dicke_dim(self.s, self.d)

    @property
    def trace(self):
        return float(np.trace(self.coeffs))

    def dominant_vector(self):
        w, v = np.linalg.eigh(self.coeffs)
        return v[:, -1] * np.sqrt(max(w[-1], 0.0))

    def is_valid(self, atol=1e-8):
        return min_eigenvalue(self.coeffs) >= -atol and abs(self.trace - 1) <= atol


@dataclass(frozen=True)
class ChoiMap:
    """Choi matrix c_{b1,b2}(k, l) of a distillation map, indexed (Bob qubit, Dicke input).

    Normalized so the single-qubit identity channel is ``2 |Phi+><Phi+|``.
    """

    d: int
    r: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        check_dims(self.d, self.r)
        c = check_symmetric(self.coeffs, "Choi coefficients")
        n = 2 * dicke_dim(self.r, self.d)
        if c.shape != (n, n):
            raise ValueError(f"expected a {n}x{n} matrix for d={self.d}, r={self.r}, got {c.shape}")
        object.__setattr__(self, "coeffs", (c + c.T) / 2)

    @classmethod
    def from_projectors(cls, d, r, vectors, weights=None):
        """Sum of ``w |v><v|`` over ``{(b, occupation): amplitude}`` dictionaries.

        Vectors are used as given (no normalization); weights default to 2.
        """
        pos = index_positions(r, d)
        n = len(pos)
        if weights is None:
            weights = [2.0] * len(vectors)
        c = np.zeros((2 * n, 2 * n))
        for w, terms in zip(weights, vectors):
            v = np.zeros(2 * n)
            for (b, occ), amp in terms.items():
                v[b * n + pos[_as_occupation(occ, r, d)]] += amp
            c += w * np.outer(v, v)
        return cls(d, r, c)

    @classmethod
    def identity(cls, d=2):
        """Choi matrix of the map |D^1_k> -> |k> (d = 2 only: the qubit identity)."""
        if d != 2:
            raise ValueError("the identity map needs a qubit input")
        return cls.from_projectors(2, 1, [{(0, 0): 1 / sqrt(2), (1, 1): 1 / sqrt(2)}])

    @property
    def n(self):
        return dicke_dim(self.r, self.d)

    def input_marginal(self):
        """tr_B C(E); the map is trace non-increasing iff this is <= identity."""
        return qubit_partial_trace(self.coeffs, self.n)

    def is_valid(self, atol=1e-8):
        if min_eigenvalue(self.coeffs) < -atol:
            return False
        marg = self.input_marginal()
        return min_eigenvalue(np.eye(self.n) - marg) >= -atol


def _as_occupation(occ, s, d):
    if np.isscalar(occ):
        if d != 2:
            raise ValueError("integer Dicke labels are only meaningful for qubits")
        return (s - int(occ), int(occ))
    return tuple(int(x) for x in occ)


@dataclass(frozen=True)
class LossTensor:
    """Sparse tensor D_{k,l;k',l'} mapping s-particle to r-particle Dicke coefficients.

    ``entries`` is keyed by index positions ``(k, l, k', l')``; ``kraus``
    holds the equivalent operators ``A_i`` (n_r x n_s) with
    ``tr_loss rho = sum_i A_i rho A_i^T`` blockwise.
    """

    d: int
    s: int
    r: int
    entries: dict = field(repr=False)
    kraus: tuple = field(repr=False)

    def weight(self, k, l, kp, lp):
        """Entry for occupation vectors (or excitation counts when d = 2)."""
        pr, ps = index_positions(self.r, self.d), index_positions(self.s, self.d)
        key = (
            pr[_as_occupation(k, self.r, self.d)],
            pr[_as_occupation(l, self.r, self.d)],
            ps[_as_occupation(kp, self.s, self.d)],
            ps[_as_occupation(lp, self.s, self.d)],
        )
        return self.entries.get(key, 0.0)


@lru_cache(maxsize=None)
def _loss_tensor(d, s, r):
    idx_r = _index_set(r, d)
    pos_s = index_positions(s, d)
    n_r, n_s = len(idx_r), len(pos_s)
    kraus = []
    for shift in _index_set(s - r, d):
        a = np.zeros((n_r, n_s))
        w = sqrt(multinomial(s - r, shift))
        for kpos, k in enumerate(idx_r):
            kp = tuple(x + y for x, y in zip(k, shift))
            a[kpos, pos_s[kp]] = w * sqrt(multinomial(r, k) / multinomial(s, kp))
        kraus.append(a)
    entries = {}
    for a in kraus:
        rows, cols = np.nonzero(a)
        for k, kp in zip(rows, cols):
            for l, lp in zip(rows, cols):
                entries[(int(k), int(l), int(kp), int(lp))] = float(a[k, kp] * a[l, lp])
    for a in kraus:
        a.setflags(write=False)
    return LossTensor(d, s, r, entries, tuple(kraus))


def loss_tensor(d, s, r):
    """Tensor of the partial trace over s - r of the s sent qudits."""
    d, s, r = check_dims(d, s, r)
    return _loss_tensor(d, s, r)


def kraus_apply(x, kraus):
    """sum_i (1 (x) A_i) X (1 (x) A_i)^T for X on (qubit x n_in)."""
    n_out, n_in = kraus[0].shape
    x4 = np.asarray(x).reshape(2, n_in, 2, n_in)
    out = np.zeros((2, n_out, 2, n_out))
    for a in kraus:
        out += np.einsum("ki,aibj,lj->akbl", a, x4, a, optimize=True)
    return out.reshape(2 * n_out, 2 * n_out)


def kraus_adjoint(y, kraus):
    """Adjoint of :func:`kraus_apply` under the trace inner product."""
    n_out, n_in = kraus[0].shape
    y4 = np.asarray(y).reshape(2, n_out, 2, n_out)
    out = np.zeros((2, n_in, 2, n_in))
    for a in kraus:
        out += np.einsum("ki,akbl,lj->aibj", a, y4, a, optimize=True)
    return out.reshape(2 * n_in, 2 * n_in)


def _loss_blocks(rho, T):
    """Apply the loss map to a (qubit x n_s) matrix, returning (qubit x n_r)."""
    return kraus_apply(rho, T.kraus)


def _check_compatible(state, T):
    if (state.d, state.s) != (T.d, T.s):
        raise ValueError(f"state (d={state.d}, s={state.s}) does not match loss tensor (d={T.d}, s={T.s})")


def apply_loss(state, T):
    """tr_loss rho in the r-particle Dicke basis."""
    _check_compatible(state, T)
    return SymmetricState(T.d, T.r, _loss_blocks(state.coeffs, T))


@dataclass(frozen=True)
class TwoQubitState:
    """Subnormalized output on (Alice qubit) x (Bob qubit), index 2 a + b."""

    matrix: np.ndarray = field(repr=False)

    @property
    def probability(self):
        return float(np.trace(self.matrix))

    @property
    def overlap(self):
        return float(PHI_PLUS @ self.matrix @ PHI_PLUS)

    @property
    def fidelity(self):
        p = self.probability
        return self.overlap / p if p > 0 else 0.0

    def normalized(self):
        return self.matrix / self.probability


def apply_map(choi, sigma):
    """E[sigma] for sigma on (Alice qubit) x (r-particle Dicke space)."""
    n = choi.n
    c4 = choi.coeffs.reshape(2, n, 2, n)
    s4 = np.asarray(sigma).reshape(2, n, 2, n)
    return np.einsum("bkcl,akel->abec", c4, s4).reshape(4, 4)


def evaluate(state, choi, T):
    """Final two-qubit operator E[tr_loss rho]."""
    _check_compatible(state, T)
    if (choi.d, choi.r) != (T.d, T.r):
        raise ValueError(f"map (d={choi.d}, r={choi.r}) does not match loss tensor (d={T.d}, r={T.r})")
    return TwoQubitState(apply_map(choi, _loss_blocks(state.coeffs, T)))


# -- bilinear structure ------------------------------------------------------


def _trace_lift(x, n):
    """X -> 1_2 (x) tr_qubit X, the adjoint pairing used by the trace functional."""
    return np.kron(np.eye(2), qubit_partial_trace(x, n))


@lru_cache(maxsize=None)
def _bilinear_matrices(d, s, r):
    T = _loss_tensor(d, s, r)
    n_s, n_r = dicke_dim(s, d), dicke_dim(r, d)
    loss = linear_map_matrix(lambda x: _loss_blocks(x, T), 2 * n_s, 2 * n_r)
    lift = linear_map_matrix(lambda x: _trace_lift(x, n_r), 2 * n_r, 2 * n_r)
    overlap = 0.5 * loss
    trace = lift @ loss
    return overlap, trace


def bilinear_matrices(d, s, r):
    """Matrices M_phi, M_tr with overlap = svec(C) M_phi svec(rho) and trace likewise."""
    d, s, r = check_dims(d, s, r)
    return _bilinear_matrices(d, s, r)


class FactorizationError(RuntimeError):
    """No joint singular basis reproduces both bilinear forms."""


@dataclass(frozen=True)
class BilinearFactorization:
    """Joint singular bases of the Bell-overlap and trace bilinear forms.

    ``overlap = sum_i overlap_values[i] * (map_basis[:, i] @ svec(C)) * (state_basis[:, i] @ svec(rho))``
    and the same with ``trace_values`` for the success probability.
    """

    d: int
    s: int
    r: int
    overlap_values: np.ndarray = field(repr=False)
    trace_values: np.ndarray = field(repr=False)
    map_basis: np.ndarray = field(repr=False)
    state_basis: np.ndarray = field(repr=False)

    def _nonzero(self, vals, tol):
        return int(np.sum(np.abs(vals) > tol * np.max(np.abs(self.overlap_values))))

    def n_overlap_terms(self, tol=1e-9):
        return self._nonzero(self.overlap_values, tol)

    def n_trace_terms(self, tol=1e-9):
        return self._nonzero(self.trace_values, tol)

    def factors(self, state, choi):
        x = self.map_basis.T @ svec(choi.coeffs)
        y = self.state_basis.T @ svec(state.coeffs)
        return x, y

    def trace(self, state, choi):
        x, y = self.factors(state, choi)
        return float(np.sum(self.trace_values * x * y))

    def overlap(self, state, choi):
        x, y = self.factors(state, choi)
        return float(np.sum(self.overlap_values * x * y))


@lru_cache(maxsize=None)
def _bilinear_factorization(d, s, r, tol):
    m_phi, m_tr = _bilinear_matrices(d, s, r)
    a = m_phi @ m_phi.T
    b = m_tr @ m_phi.T
    scale = max(np.linalg.norm(m_phi), np.linalg.norm(m_tr))
    if np.linalg.norm(b - b.T) > tol * scale**2:
        raise FactorizationError(f"trace and overlap forms share no singular basis for d={d}, s={s}, r={r}")
    b = (b + b.T) / 2
    for mix in (np.pi, np.e, np.sqrt(3.0), 0.7071):
        _, u = np.linalg.eigh(a + mix * b)
        dphi = np.sqrt(np.clip(np.einsum("ij,ij->j", u, a @ u), 0, None))
        if np.min(dphi) <= tol * scale:
            continue
        v = (m_phi.T @ u) / dphi
        dtr = np.einsum("ij,ij->j", u, m_tr @ v)
        err_phi = np.linalg.norm(u @ np.diag(dphi) @ v.T - m_phi)
        err_tr = np.linalg.norm(u @ np.diag(dtr) @ v.T - m_tr)
        if max(err_phi, err_tr) <= tol * scale:
            dtr[np.abs(dtr) <= tol * scale] = 0.0
            order = np.lexsort((-dphi, dtr == 0))
            return BilinearFactorization(d, s, r, dphi[order], dtr[order], u[:, order], v[:, order])
    raise FactorizationError(f"joint diagonalization failed for d={d}, s={s}, r={r}")


def bilinear_factorization(d, s, r, tol=1e-9):
    """Joint singular-basis factorization; raises FactorizationError if none exists."""
    d, s, r = check_dims(d, s, r)
    return _bilinear_factorization(d, s, r, tol)


# -- transversal rotations ---------------------------------------------------


def transversal_operator(o, s):
    """Dicke-basis matrix of O^{(x) s} for a real d x d matrix O."""
    o = np.asarray(o, dtype=float)
    d = o.shape[0]
    idx = _index_set(s, d)
    pos = index_positions(s, d)
    out = np.zeros((len(idx), len(idx)))
    for col, i in enumerate(idx):
        poly = {(0,) * d: 1.0}
        for m, count in enumerate(i):
            for _ in range(count):
                nxt = {}
                for mono, c in poly.items():
                    for lvl in range(d):
                        if o[lvl, m] == 0:
                            continue
                        key = mono[:lvl] + (mono[lvl] + 1,) + mono[lvl + 1 :]
                        nxt[key] = nxt.get(key, 0.0) + c * o[lvl, m]
                poly = nxt
        mi = multinomial(s, i)
        for j, c in poly.items():
            out[pos[j], col] = sqrt(mi / multinomial(s, j)) * c
    return out
