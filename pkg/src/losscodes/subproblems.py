"""Convex subproblems (fixed map or fixed state) and the nested outer searches."""

import hashlib
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from . import sdp
from ._linalg import linear_map_matrix, qubit_partial_trace, sqrtm_psd, svec
from ._validation import check_dims, check_probability, check_random_state
from .dicke import (
    ChoiMap,
    SymmetricState,
    dicke_dim,
    evaluate,
    kraus_adjoint,
    kraus_apply,
    loss_tensor,
)

log = logging.getLogger(__name__)


@dataclass
class ProtocolResult:
    d: int
    s: int
    r: int
    p_dist: float
    fidelity: float
    state: SymmetricState = field(repr=False)
    map: ChoiMap = field(repr=False)
    source: str = ""

    def reevaluate(self):
        """(probability, fidelity) recomputed from the stored state and map."""
        out = evaluate(self.state, self.map, loss_tensor(self.d, self.s, self.r))
        return out.probability, out.fidelity

    def state_hash(self):
        return hashlib.sha1(np.round(self.state.coeffs, 10).tobytes()).hexdigest()[:12]


class SubproblemInfeasible(RuntimeError):
    pass


# -- generic programs (any Kraus loss, any input dimension) -------------------


@lru_cache(maxsize=None)
def _ptrace_svec(n):
    """Sparse svec matrix of X -> tr_qubit X for X of order 2n."""
    m = linear_map_matrix(lambda x: qubit_partial_trace(x, n), 2 * n, n)
    m[np.abs(m) < 1e-15] = 0.0
    return sp.csr_matrix(m)


def _lift(x, n):
    return np.kron(np.eye(2), qubit_partial_trace(x, n))


@dataclass
class _ProgramResult:
    status: str
    matrix: np.ndarray = None
    fidelity: float = np.nan
    mult: float = np.nan  # multiplier of the probability equality


def solve_map_program(sigma, n, p, feas_tol=1e-8, gap_tol=1e-8):
    """Best Choi matrix for a received operator ``sigma`` on (qubit x n) at success probability ``p``."""
    prob = sdp.SdpProblem()
    blk = prob.add_psd(2 * n)
    sel = prob.selector(blk)
    eq = prob.add_eq(prob.inner_row(blk, _lift(sigma, n)), [-p])
    prob.add_psd_constraint(-(_ptrace_svec(n) @ sel), svec(np.eye(n)), n)
    prob.set_objective(prob.inner_row(blk, sigma / (2 * p)), "max")
    sol = prob.solve(feas_tol, gap_tol)
    if sol.status not in (sdp.OPTIMAL, sdp.INACCURATE):
        return _ProgramResult(sol.status)
    return _ProgramResult(sol.status, sol.blocks[0], sol.objective, float(sol.duals[eq][0]))


def solve_state_program(choi, kraus, p, feas_tol=1e-8, gap_tol=1e-8):
    """Best input state for a fixed Choi matrix (order 2 n_out) and loss Kraus operators."""
    n_out, n_in = kraus[0].shape
    obj = kraus_adjoint(choi / (2 * p), kraus)
    tr_op = kraus_adjoint(_lift(choi, n_out), kraus)
    prob = sdp.SdpProblem()
    blk = prob.add_psd(2 * n_in)
    eq = prob.add_eq(prob.inner_row(blk, tr_op), [-p])
    prob.add_eq(prob.trace_row(blk), [-1.0])
    prob.set_objective(prob.inner_row(blk, obj), "max")
    sol = prob.solve(feas_tol, gap_tol)
    if sol.status not in (sdp.OPTIMAL, sdp.INACCURATE):
        return _ProgramResult(sol.status)
    return _ProgramResult(sol.status, sol.blocks[0], sol.objective, float(sol.duals[eq][0]))


def _received_gradient(choi, n, p, mult):
    """dF/dsigma of the map program value (envelope theorem)."""
    return choi / (2 * p) + mult * _lift(choi, n)


def state_gradient(psi, kraus, choi, p, mult):
    """Gradient of the map-program value w.r.t. an unnormalized pure-state vector."""
    n_out = kraus[0].shape[0]
    g = kraus_adjoint(_received_gradient(choi, n_out, p, mult), kraus)
    nrm2 = psi @ psi
    gpsi = g @ psi
    return 2 * (gpsi - (psi @ gpsi) * psi / nrm2) / nrm2


# -- public convex subproblems -----------------------------------------------


@dataclass(frozen=True)
class FixedMapProblem:
    map: ChoiMap
    p_dist: float
    s: int

    def __post_init__(self):
        check_probability(self.p_dist)
        check_dims(self.map.d, self.s, self.map.r)


@dataclass(frozen=True)
class FixedStateProblem:
    state: SymmetricState
    p_dist: float
    r: int

    def __post_init__(self):
        check_probability(self.p_dist)
        check_dims(self.state.d, self.state.s, self.r)


def optimize_state_given_map(problem):
    """Optimal input state for a fixed map; raises SubproblemInfeasible."""
    choi = problem.map
    T = loss_tensor(choi.d, problem.s, choi.r)
    res = solve_state_program(choi.coeffs, T.kraus, problem.p_dist)
    if res.matrix is None:
        raise SubproblemInfeasible(f"no state reaches p_dist={problem.p_dist} with this map ({res.status})")
    rho = (res.matrix + res.matrix.T) / 2
    rho /= np.trace(rho)
    return SymmetricState(choi.d, problem.s, rho), res.fidelity


def optimize_map_given_state(problem):
    """Optimal distillation map for a fixed input state; raises SubproblemInfeasible."""
    st = problem.state
    T = loss_tensor(st.d, st.s, problem.r)
    sigma = kraus_apply(st.coeffs, T.kraus)
    res = solve_map_program(sigma, dicke_dim(problem.r, st.d), problem.p_dist)
    if res.matrix is None:
        raise SubproblemInfeasible(f"no map reaches p_dist={problem.p_dist} for this state ({res.status})")
    return ChoiMap(st.d, problem.r, res.matrix), res.fidelity


# -- outer searches ----------------------------------------------------------


class _StallMonitor:
    """Stops after ``maxiter`` or when the best value moved < ``tol`` over ``window`` iterations."""

    def __init__(self, maxiter=200, tol=1e-7, window=10):
        self.maxiter, self.tol, self.window = maxiter, tol, window
        self.history = []

    def __call__(self, value):
        self.history.append(value)
        h = self.history
        if len(h) >= self.maxiter:
            raise StopIteration
        if len(h) > self.window and abs(h[-1] - h[-1 - self.window]) < self.tol:
            raise StopIteration


def _pure_state_objective(kraus, n_r, p, best, gradient="envelope", fd_step=1e-6):
    """Returns f(psi) = -F and its gradient, recording the best point in ``best``."""

    def value(psi):
        nrm2 = psi @ psi
        if nrm2 < 1e-24:
            return None
        rho = np.outer(psi, psi) / nrm2
        res = solve_map_program(kraus_apply(rho, kraus), n_r, p)
        if res.matrix is None:
            return None
        if res.fidelity > best.get("F", -np.inf):
            best.update(F=res.fidelity, psi=psi / np.sqrt(nrm2), choi=res.matrix)
        return res

    def fun(psi):
        res = value(psi)
        if res is None:
            return 1.0, np.zeros_like(psi)
        if gradient == "envelope":
            g = state_gradient(psi, kraus, res.matrix, p, res.mult)
        else:
            g = np.empty_like(psi)
            for k in range(psi.size):
                e = np.zeros_like(psi)
                e[k] = fd_step
                hi, lo = value(psi + e), value(psi - e)
                if hi is None or lo is None:
                    g[k] = 0.0
                else:
                    g[k] = (hi.fidelity - lo.fidelity) / (2 * fd_step)
        return -res.fidelity, -g

    return fun


def search_pure_state(kraus, n_r, p, psi0, maxiter=200, tol=1e-7, gradient="envelope", support=None):
    """BFGS over an unnormalized state vector; returns (F, psi, choi) of the best point seen.

    With ``support`` (indices into psi) only those components vary; the rest stay zero.
    """
    best = {}
    fun = _pure_state_objective(kraus, n_r, p, best, gradient)
    mon = _StallMonitor(maxiter, tol)
    psi0 = np.asarray(psi0, dtype=float)
    psi0 = psi0 / np.linalg.norm(psi0)
    if support is not None:
        support = np.asarray(support, dtype=int)
        full_fun, size = fun, psi0.size

        def fun(z):
            psi = np.zeros(size)
            psi[support] = z
            f, g = full_fun(psi)
            return f, g[support]

        psi0 = psi0[support]
    fun(psi0)

    def cb(intermediate_result):
        mon(-intermediate_result.fun)

    try:
        minimize(fun, psi0, jac=True, method="BFGS", callback=cb, options={"gtol": 1e-9, "maxiter": maxiter})
    except (StopIteration, np.linalg.LinAlgError, FloatingPointError):
        pass
    if not best:
        raise SubproblemInfeasible("map program failed at every visited state")
    return best["F"], best["psi"], best["choi"]


def _as_psi(d, s, seed_state, rng):
    n = 2 * dicke_dim(s, d)
    if seed_state is None:
        return rng.standard_normal(n)
    if isinstance(seed_state, SymmetricState):
        return seed_state.dominant_vector()
    psi = np.asarray(seed_state, dtype=float).ravel()
    if psi.size != n:
        raise ValueError(f"seed vector has length {psi.size}, expected {n}")
    return psi


def outer_state_search(d, s, r, p_dist, seed_state=None, maxiter=200, tol=1e-7, gradient="envelope", random_state=None):
    """Quasi-Newton search over pure input states with the optimal map at each point."""
    d, s, r = check_dims(d, s, r)
    p_dist = check_probability(p_dist)
    rng = check_random_state(random_state)
    T = loss_tensor(d, s, r)
    psi0 = _as_psi(d, s, seed_state, rng)
    F, psi, choi = search_pure_state(T.kraus, dicke_dim(r, d), p_dist, psi0, maxiter, tol, gradient)
    return ProtocolResult(
        d, s, r, p_dist, F, SymmetricState.from_vector(d, s, psi), ChoiMap(d, r, choi), source="outer_state"
    )


# map parameterization: C = (1 (x) M^-1/2) B B^T (1 (x) M^-1/2), M = tr_B(BB^T) + GG^T + eps


def _map_from_params(theta, n, eps=1e-12):
    """Trace-nonincreasing Choi matrix from free parameters; without the G block it is trace preserving."""
    m = 2 * n
    b = theta[: m * m].reshape(m, m)
    bb = b @ b.T
    mm = qubit_partial_trace(bb, n) + eps * np.eye(n)
    if theta.size > m * m:
        g = theta[m * m :].reshape(n, n)
        mm = mm + g @ g.T
    w, v = np.linalg.eigh(mm)
    inv_half = (v / np.sqrt(np.clip(w, eps, None))) @ v.T
    k = np.kron(np.eye(2), inv_half)
    c = k @ bb @ k
    return (c + c.T) / 2


def _params_from_map(choi, n, with_slack=True):
    c = choi.coeffs
    b = sqrtm_psd(c)
    theta = b.ravel()
    if with_slack:
        rest = np.eye(n) - qubit_partial_trace(c, n)
        theta = np.concatenate([theta, sqrtm_psd(rest).ravel()])
    scale = np.max(np.abs(theta))
    return theta / scale if scale > 1 else theta


def outer_map_search(d, s, r, p_dist, seed_map=None, maxiter=200, random_state=None):
    """Box-constrained SLSQP search over maps with the optimal state at each point."""
    d, s, r = check_dims(d, s, r)
    p_dist = check_probability(p_dist)
    rng = check_random_state(random_state)
    T = loss_tensor(d, s, r)
    n = dicke_dim(r, d)
    # deterministic maps must be trace preserving: drop the slack block
    with_slack = p_dist < 1.0
    if seed_map is None:
        theta0 = rng.uniform(-1, 1, size=4 * n * n + (n * n if with_slack else 0))
    else:
        theta0 = _params_from_map(seed_map, n, with_slack)
    best = {}
    cache = {}

    def tr_operator(c):
        return kraus_adjoint(_lift(c, n), T.kraus)

    def solve_at(theta):
        key = theta.tobytes()
        if key not in cache:
            c = _map_from_params(theta, n)
            res = solve_state_program(c, T.kraus, p_dist)
            cache.clear()
            cache[key] = (c, res)
            if res.matrix is not None and res.fidelity > best.get("F", -np.inf):
                best.update(F=res.fidelity, rho=res.matrix, choi=c)
        return cache[key]

    def directional(theta, fn):
        """Finite differences of the closed-form parameterization, contracted with fn's gradient."""
        c0 = _map_from_params(theta, n)
        gmat = fn(c0)
        h = 1e-7
        out = np.empty_like(theta)
        for k in range(theta.size):
            t = theta.copy()
            t[k] += h
            out[k] = np.sum(gmat * (_map_from_params(t, n) - c0)) / h
        return out

    def fun(theta):
        _, res = solve_at(theta)
        return -res.fidelity if res.matrix is not None else 0.0

    def jac(theta):
        _, res = solve_at(theta)
        if res.matrix is None:
            return np.zeros_like(theta)
        sigma = kraus_apply(res.matrix, T.kraus)
        return -directional(theta, lambda c: _received_gradient(sigma, n, p_dist, res.mult))

    def eig_con(theta, which):
        w, v = np.linalg.eigh(tr_operator(_map_from_params(theta, n)))
        idx = -1 if which == "max" else 0
        val = w[idx] - p_dist if which == "max" else p_dist - w[idx]
        vec = v[:, idx]
        return val, vec

    def con_max(theta):
        return eig_con(theta, "max")[0]

    def con_min(theta):
        return eig_con(theta, "min")[0]

    def con_jac(theta, which):
        _, vec = eig_con(theta, which)
        sign = 1.0 if which == "max" else -1.0
        # d lambda / dC = K^T (v v^T) lifted back onto the Choi matrix
        proj = kraus_apply(np.outer(vec, vec), T.kraus)
        return sign * directional(theta, lambda c: _lift(proj, n))

    solve_at(theta0)
    cons = [
        {"type": "ineq", "fun": con_max, "jac": lambda t: con_jac(t, "max")},
        {"type": "ineq", "fun": con_min, "jac": lambda t: con_jac(t, "min")},
    ]
    try:
        minimize(
            fun,
            theta0,
            jac=jac,
            method="SLSQP",
            bounds=[(-1.0, 1.0)] * theta0.size,
            constraints=cons,
            options={"maxiter": maxiter, "ftol": 1e-9},
        )
    except (np.linalg.LinAlgError, ValueError) as exc:
        log.debug("outer map search stopped early: %s", exc)
    if not best:
        raise SubproblemInfeasible(f"no map visited reaches p_dist={p_dist}")
    rho = (best["rho"] + best["rho"].T) / 2
    return ProtocolResult(
        d,
        s,
        r,
        p_dist,
        best["F"],
        SymmetricState(d, s, rho / np.trace(rho)),
        ChoiMap(d, r, best["choi"]),
        source="outer_map",
    )
