"""Brute-force evaluation in the full (Alice qubit) x (d^s) Hilbert space.

Ground truth for the Dicke-reduced formulas, and the engine for the
small-scale full-erasure optimization where each loss configuration gets
its own correction map.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations, product

import numpy as np
from scipy.optimize import minimize

from ._validation import check_dims, check_probability, check_random_state
from .dicke import (
    ChoiMap,
    SymmetricState,
    TwoQubitState,
    _index_set,
    apply_map,
    index_positions,
    kraus_apply,
    multinomial,
)
from .subproblems import SubproblemInfeasible, solve_map_program, state_gradient

log = logging.getLogger(__name__)

MEMORY_CAP = 2 * 4**10


@dataclass(frozen=True)
class FullState:
    d: int
    s: int
    matrix: np.ndarray = field(repr=False)

    @property
    def trace(self):
        return float(np.trace(self.matrix))


@lru_cache(maxsize=None)
def dicke_isometry(s, d):
    """Columns are the Dicke states of ``index_set(s, d)`` in the computational basis."""
    pos = index_positions(s, d)
    v = np.zeros((d**s, len(pos)))
    for flat, digits in enumerate(product(range(d), repeat=s)):
        occ = tuple(digits.count(m) for m in range(d))
        v[flat, pos[occ]] = 1.0 / np.sqrt(multinomial(s, occ))
    v.setflags(write=False)
    return v


def _check_cap(d, s, cap):
    if 2 * d**s > cap:
        raise MemoryError(f"full space of dimension 2*{d}^{s} exceeds the cap of {cap}")


def embed(state, cap=MEMORY_CAP):
    """SymmetricState -> FullState."""
    _check_cap(state.d, state.s, cap)
    k = np.kron(np.eye(2), dicke_isometry(state.s, state.d))
    return FullState(state.d, state.s, k @ state.coeffs @ k.T)


def embed_map(choi, cap=MEMORY_CAP):
    """Full-space Choi matrix of a map acting on the symmetric input subspace."""
    _check_cap(choi.d, choi.r, cap)
    k = np.kron(np.eye(2), dicke_isometry(choi.r, choi.d))
    return k @ choi.coeffs @ k.T


def configurations(s, r):
    """All surviving-slot subsets of size r, as sorted tuples."""
    return list(combinations(range(s), r))


@lru_cache(maxsize=None)
def configuration_kraus(d, s, cfg):
    """Kraus operators (d^r x d^s) tracing out the slots not in ``cfg``."""
    cfg = tuple(cfg)
    lost = [k for k in range(s) if k not in cfg]
    ops = []
    for env in product(range(d), repeat=len(lost)):
        a = np.zeros((d ** len(cfg), d**s))
        for kept in product(range(d), repeat=len(cfg)):
            digits = [0] * s
            for slot, v in zip(cfg, kept):
                digits[slot] = v
            for slot, v in zip(lost, env):
                digits[slot] = v
            row = int(np.ravel_multi_index(kept, (d,) * len(cfg))) if cfg else 0
            col = int(np.ravel_multi_index(digits, (d,) * s))
            a[row, col] = 1.0
        ops.append(a)
    return tuple(ops)


def trace_configuration(state, cfg):
    """Partial trace over the lost slots; survivors keep ascending order."""
    cfg = tuple(sorted(cfg))
    if any(c < 0 or c >= state.s for c in cfg) or len(set(cfg)) != len(cfg):
        raise ValueError(f"invalid loss configuration {cfg} for s={state.s}")
    kraus = configuration_kraus(state.d, state.s, cfg)
    return FullState(state.d, len(cfg), kraus_apply(state.matrix, kraus))


def full_evaluate(state, full_choi, cfg):
    """Two-qubit output of a full-space Choi matrix on one loss configuration."""
    sigma = trace_configuration(state, cfg)
    return TwoQubitState(apply_map(_FullChoi(full_choi, state.d ** len(cfg)), sigma.matrix))


@dataclass(frozen=True)
class _FullChoi:
    coeffs: np.ndarray
    n: int


@dataclass
class FullErasureResult:
    d: int
    s: int
    r: int
    p_dist: float
    fidelity: float  # worst case over configurations
    state: np.ndarray = field(repr=False)  # pure state vector on 2 d^s
    maps: dict = field(repr=False)  # cfg -> full Choi matrix
    per_configuration: dict = field(default_factory=dict)


def _config_values(psi, kraus_sets, n_r, p):
    rho = np.outer(psi, psi) / (psi @ psi)
    out = []
    for kraus in kraus_sets:
        res = solve_map_program(kraus_apply(rho, kraus), n_r, p)
        out.append(res)
    return out


def full_erasure_optimize(d, s, r, p_dist, n_restarts=8, seed_state=None, maxiter=150, random_state=None):
    """Per-configuration maps and a shared pure state maximizing the worst-case fidelity.

    Solved as the epigraph problem max t s.t. F_cfg(psi) >= t with SLSQP;
    every F_cfg is the optimal value of an independent map program whose
    gradient comes from the envelope theorem.
    """
    d, s, r = check_dims(d, s, r)
    p_dist = check_probability(p_dist)
    if d != 2 or s > 6:
        raise ValueError("full-erasure optimization is limited to d = 2, s <= 6")
    rng = check_random_state(random_state)
    cfgs = configurations(s, r)
    kraus_sets = [configuration_kraus(d, s, c) for c in cfgs]
    n_r, dim = d**r, 2 * d**s
    best = {"F": -np.inf}
    cache = {}

    def values(psi):
        key = psi.tobytes()
        if key not in cache:
            cache.clear()
            res = _config_values(psi, kraus_sets, n_r, p_dist)
            cache[key] = res
            if all(x.matrix is not None for x in res):
                worst = min(x.fidelity for x in res)
                if worst > best["F"]:
                    best.update(F=worst, psi=psi / np.linalg.norm(psi), res=res)
        return cache[key]

    def con(z):
        res = values(z[:-1])
        return np.array([(x.fidelity if x.matrix is not None else 0.0) - z[-1] for x in res])

    def con_jac(z):
        psi = z[:-1]
        res = values(psi)
        rows = []
        for x, kraus in zip(res, kraus_sets):
            g = state_gradient(psi, kraus, x.matrix, p_dist, x.mult) if x.matrix is not None else np.zeros(dim)
            rows.append(np.append(g, -1.0))
        return np.array(rows)

    starts = []
    if seed_state is not None:
        if isinstance(seed_state, SymmetricState):
            seed_state = np.kron(np.eye(2), dicke_isometry(s, d)) @ seed_state.dominant_vector()
        starts.append(np.asarray(seed_state, dtype=float))
    while len(starts) < n_restarts + (seed_state is not None):
        starts.append(rng.standard_normal(dim))
    for psi0 in starts:
        psi0 = psi0 / np.linalg.norm(psi0)
        res0 = values(psi0)
        t0 = min((x.fidelity for x in res0 if x.matrix is not None), default=0.0)
        try:
            minimize(
                lambda z: -z[-1],
                np.append(psi0, t0),
                jac=lambda z: np.append(np.zeros(dim), -1.0),
                method="SLSQP",
                constraints=[{"type": "ineq", "fun": con, "jac": con_jac}],
                options={"maxiter": maxiter, "ftol": 1e-10},
            )
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.debug("full-erasure restart stopped: %s", exc)
        if best["F"] >= 1 - 1e-9:
            break
    if "psi" not in best:
        raise SubproblemInfeasible(f"no state reaches p_dist={p_dist} on every configuration")
    maps = {c: x.matrix for c, x in zip(cfgs, best["res"])}
    per = {c: x.fidelity for c, x in zip(cfgs, best["res"])}
    return FullErasureResult(d, s, r, p_dist, best["F"], best["psi"], maps, per)
