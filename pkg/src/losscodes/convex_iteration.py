"""Rank-constrained feasibility by convex iteration.

Each bilinear term ``x_i * y_i`` of the overlap/trace factorization is
tied to a small PSD matrix whose rank-one property enforces the product.
Terms that contribute to the success probability use the full 3x3 form
``[[a, z, x], [z, b, y], [x, y, 1]]``; overlap-only terms use the cheaper
2x2 pair ``[[q, x+y], [x+y, 1]]`` (rank target) plus the hypograph
``[[t, x-y], [x-y, 1]] >= 0`` so that ``(q - t) / 4 <= x y``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import sdp
from ._linalg import svec
from ._validation import check_dims, check_probability, check_random_state
from .dicke import (
    ChoiMap,
    SymmetricState,
    bilinear_factorization,
    dicke_dim,
    evaluate,
    kraus_apply,
    loss_tensor,
)
from .subproblems import _ptrace_svec, solve_map_program

log = logging.getLogger(__name__)

FULL = "full"
COMPRESSED = "compressed"


@dataclass(frozen=True)
class RankTerm:
    index: int
    kind: str
    overlap_coef: float
    trace_coef: float
    map_vector: np.ndarray = field(repr=False)
    state_vector: np.ndarray = field(repr=False)

    @property
    def size(self):
        return 3 if self.kind == FULL else 2


@dataclass
class DirectionState:
    W: list
    quantifier: float = np.inf
    stall: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def initial(cls, terms):
        return cls([np.ones((t.size, t.size)) for t in terms])

    def copy(self):
        return DirectionState([w.copy() for w in self.W], self.quantifier, self.stall, list(self.history))


@dataclass
class StepResult:
    ok: bool
    status: str
    objective: float = np.nan
    quantifier: float = np.inf
    state: np.ndarray = field(default=None, repr=False)
    choi: np.ndarray = field(default=None, repr=False)
    G: list = field(default=None, repr=False)
    eig: list = field(default=None, repr=False)


def build_terms(d, s, r, tol=1e-9):
    """One rank term per overlap singular value; trace-coupled terms are full 3x3."""
    f = bilinear_factorization(d, s, r)
    scale = np.max(np.abs(f.overlap_values))
    terms = []
    for i in range(f.overlap_values.size):
        dphi, dtr = float(f.overlap_values[i]), float(f.trace_values[i])
        if abs(dphi) <= tol * scale and abs(dtr) <= tol * scale:
            continue
        kind = FULL if abs(dtr) > tol * scale else COMPRESSED
        terms.append(RankTerm(i, kind, dphi, dtr if kind == FULL else 0.0, f.map_basis[:, i], f.state_basis[:, i]))
    return terms


def quantifier_of(mats):
    """Sum over matrices of all eigenvalues except the largest."""
    total = 0.0
    eigs = []
    for g in mats:
        w, u = np.linalg.eigh((g + g.T) / 2)
        eigs.append((w, u))
        total += float(np.sum(w[:-1]))
    return total, eigs


class _StepProgram:
    """Cached constraint structure for the step SDP of one (d, s, r)."""

    def __init__(self, d, s, r, terms):
        self.d, self.s, self.r, self.terms = d, s, r, terms
        self.n_r, self.n_s = dicke_dim(r, d), dicke_dim(s, d)

    def solve(self, W, F_target, p_dist, feas_tol=1e-8, gap_tol=1e-8):
        prob = sdp.SdpProblem()
        cblk = prob.add_psd(2 * self.n_r)
        rblk = prob.add_psd(2 * self.n_s)
        blocks = []
        for t in self.terms:
            if t.kind == FULL:
                blocks.append((prob.add_psd(3), None))
            else:
                blocks.append((prob.add_psd(2), prob.add_psd(2)))
        nv = prob.nvar
        csel, rsel = prob.selector(cblk), prob.selector(rblk)

        def xrow(t):
            return sp.csr_matrix(t.map_vector) @ csel

        def yrow(t):
            return sp.csr_matrix(t.state_vector) @ rsel

        trace_rows, overlap_rows = [], []
        for t, (g, h) in zip(self.terms, blocks):
            if t.kind == FULL:
                prob.add_eq(prob.entry(g, 0, 2) - xrow(t), 0.0)
                prob.add_eq(prob.entry(g, 1, 2) - yrow(t), 0.0)
                prob.add_eq(prob.entry(g, 2, 2), -1.0)
                z = prob.entry(g, 0, 1)
                trace_rows.append(t.trace_coef * z)
                overlap_rows.append(t.overlap_coef * z)
            else:
                prob.add_eq(prob.entry(g, 0, 1) - xrow(t) - yrow(t), 0.0)
                prob.add_eq(prob.entry(g, 1, 1), -1.0)
                prob.add_eq(prob.entry(h, 0, 1) - xrow(t) + yrow(t), 0.0)
                prob.add_eq(prob.entry(h, 1, 1), -1.0)
                overlap_rows.append(t.overlap_coef / 4 * (prob.entry(g, 0, 0) - prob.entry(h, 0, 0)))
        prob.add_eq(sum(trace_rows), -p_dist)
        prob.add_eq(sum(overlap_rows), -F_target * p_dist)
        prob.add_eq(prob.trace_row(rblk), -1.0)
        prob.add_psd_constraint(-(_ptrace_svec(self.n_r) @ csel), svec(np.eye(self.n_r)), self.n_r)
        q = np.zeros(nv)
        for (g, _), w in zip(blocks, W):
            q[g.slice] = svec(w)
        prob.set_objective(q, "min")
        sol = prob.solve(feas_tol, gap_tol)
        if sol.status not in (sdp.OPTIMAL, sdp.INACCURATE):
            return StepResult(False, sol.status)
        # rank-target matrices in term order
        mats = []
        k = 2
        for t in self.terms:
            mats.append(sol.blocks[k])
            k += 1 if t.kind == FULL else 2
        quant, eig = quantifier_of(mats)
        return StepResult(True, sol.status, sol.objective, quant, sol.blocks[1], sol.blocks[0], mats, eig)


def _direction_from(eig):
    W = []
    for w, u in eig:
        us = u[:, :-1]
        W.append(us @ us.T)
    return W


def iterate_step(program, direction, F_target, p_dist):
    """One convex-iteration step; on solver failure the direction is returned unchanged."""
    res = program.solve(direction.W, F_target, p_dist)
    if not res.ok:
        return res, direction
    new = DirectionState(_direction_from(res.eig), res.quantifier, direction.stall, direction.history + [res.quantifier])
    return res, new


def perturb(direction, eig, rng, high=0.01):
    """W_i = U*(r u3^T + U*^T) with r ~ U[0, high]^(k-1); symmetric part kept."""
    W = []
    for w, u in eig:
        us, u3 = u[:, :-1], u[:, -1]
        rv = rng.uniform(0.0, high, size=us.shape[1]) if high > 0 else np.zeros(us.shape[1])
        m = us @ (np.outer(rv, u3) + us.T)
        W.append((m + m.T) / 2)
    return DirectionState(W, direction.quantifier, 0, list(direction.history))


@dataclass
class ScanResult:
    fidelity: float
    feasible: bool
    state: SymmetricState = field(default=None, repr=False)
    map: ChoiMap = field(default=None, repr=False)
    certified_fidelity: float = -np.inf
    iterations: dict = field(default_factory=dict)


def _extract(d, s, r, res):
    rho = (res.state + res.state.T) / 2
    rho = rho / np.trace(rho)
    c = (res.choi + res.choi.T) / 2
    return SymmetricState(d, s, rho), ChoiMap(d, r, c)


def _rank_one_direction(terms, state, choi):
    """Direction matrices annihilating the exact rank-one lift of (state, map)."""
    cv, rv = svec(choi.coeffs), svec(state.coeffs)
    W = []
    for t in terms:
        x, y = float(t.map_vector @ cv), float(t.state_vector @ rv)
        v = np.array([x, y, 1.0]) if t.kind == FULL else np.array([x + y, 1.0])
        W.append(np.eye(v.size) - np.outer(v, v) / (v @ v))
    return W


def _certify(d, s, r, res, F_target, p_dist, tol=1e-5):
    """Optimal map for the iterate's state; a certificate if it reaches F_target - tol."""
    rho = (res.state + res.state.T) / 2
    rho = rho / np.trace(rho)
    T = loss_tensor(d, s, r)
    prog = solve_map_program(kraus_apply(rho, T.kraus), dicke_dim(r, d), p_dist)
    if prog.matrix is None or prog.fidelity < F_target - tol:
        return None
    return SymmetricState(d, s, rho), ChoiMap(d, r, prog.matrix), prog.fidelity


def run_check(
    program, direction, F_target, p_dist, rng, max_iter=50, rank_eps=1e-6, stall_tol=1e-8, stall_window=10, certify=True
):
    """Iterate at a fixed fidelity until it passes or the cap is hit.

    A check passes when the rank quantifier drops below ``rank_eps``, or
    (with ``certify``) when the current state iterate together with its
    optimal map already reaches ``F_target``.  Returns
    ``(passed, direction, protocol, iterations)`` with ``protocol`` a
    ``(state, map, fidelity)`` triple or None.
    """
    d, s, r = program.d, program.s, program.r
    for it in range(1, max_iter + 1):
        res, direction = iterate_step(program, direction, F_target, p_dist)
        if not res.ok:
            return False, direction, None, it
        if res.quantifier < rank_eps:
            state, choi = _extract(d, s, r, res)
            out = evaluate(state, choi, loss_tensor(d, s, r))
            return True, direction, (state, choi, out.fidelity), it
        if certify:
            cert = _certify(d, s, r, res, F_target, p_dist)
            if cert is not None:
                W = _rank_one_direction(program.terms, cert[0], cert[1])
                return True, DirectionState(W, 0.0, 0, direction.history), cert, it
        h = direction.history
        if len(h) > stall_window and h[-1 - stall_window] - h[-1] < stall_tol:
            direction = perturb(direction, res.eig, rng)
    return False, direction, None, max_iter


def line_scan(d, s, r, p_dist, F_grid=None, max_iter=50, rank_eps=1e-6, certify=True, random_state=None):
    """Ascending fidelity scan; returns the last passing F with its extracted protocol."""
    d, s, r = check_dims(d, s, r)
    p_dist = check_probability(p_dist)
    rng = check_random_state(random_state)
    if F_grid is None:
        F_grid = np.round(np.arange(0.50, 1.0001, 0.01), 2)
    F_grid = np.asarray(F_grid, dtype=float)
    if np.any(np.diff(F_grid) <= 0):
        raise ValueError("F_grid must be ascending")
    terms = build_terms(d, s, r)
    program = _StepProgram(d, s, r, terms)
    direction = DirectionState.initial(terms)
    out = ScanResult(float(F_grid[0]), False)
    for F in F_grid:
        if out.feasible and out.certified_fidelity >= F:
            out.fidelity = float(F)
            out.iterations[float(F)] = 0
            continue
        ok, direction, proto, its = run_check(program, direction, F, p_dist, rng, max_iter, rank_eps, certify=certify)
        out.iterations[float(F)] = its
        if not ok:
            break
        out.fidelity, out.feasible = float(F), True
        out.state, out.map, out.certified_fidelity = proto
    return out
