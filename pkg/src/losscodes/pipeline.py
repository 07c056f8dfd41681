"""Grid optimization driver: convex iteration, outer searches, neighbor seeding."""

import logging
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from math import comb

import numpy as np
from scipy.optimize import minimize

from . import sdp
from ._linalg import svec
from ._validation import check_dims, check_grid, check_probability, check_random_state
from .convex_iteration import line_scan
from .dicke import ChoiMap, SymmetricState, dicke_dim, evaluate, kraus_adjoint, kraus_apply, loss_tensor
from .full_space import full_erasure_optimize
from .subproblems import (
    ProtocolResult,
    SubproblemInfeasible,
    _lift,
    _ptrace_svec,
    _StallMonitor,
    outer_map_search,
    outer_state_search,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    d: int
    s: int
    r: int
    pmin: float = 0.01
    pmax: float = 1.0
    outermap: bool = False
    erasure: bool = False
    workers: int = 1
    seed: int = 0
    threshold: float = 1e-4
    n_restarts: int = 2
    convex_iteration: bool = True
    maxiter: int = 200

    def __post_init__(self):
        check_dims(self.d, self.s, self.r)
        if not (0 < self.pmin <= self.pmax <= 1):
            raise ValueError(f"need 0 < pmin <= pmax <= 1, got pmin={self.pmin}, pmax={self.pmax}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def grid(self):
        lo, hi = int(round(self.pmin * 100)), int(round(self.pmax * 100))
        if abs(lo / 100 - self.pmin) > 1e-9 or abs(hi / 100 - self.pmax) > 1e-9:
            raise ValueError("pmin and pmax must be multiples of 0.01")
        return check_grid(np.arange(lo, hi + 1) / 100)


class ResultStore:
    """Best result per grid probability; a slot's fidelity only ever increases."""

    def __init__(self, grid):
        self.grid = [float(p) for p in grid]
        self.best = {}
        self.failures = {}
        self.log = []

    @staticmethod
    def key(p):
        return round(float(p), 2)

    def update(self, result, min_gain=0.0):
        k = self.key(result.p_dist)
        cur = self.best.get(k)
        if cur is None or result.fidelity > cur.fidelity + min_gain:
            self.best[k] = result
            self.log.append((k, result.fidelity, getattr(result, "source", "")))
            return True
        return False

    def fidelity(self, p):
        r = self.best.get(self.key(p))
        return r.fidelity if r is not None else np.nan

    def table(self):
        return [(p, self.best[p].fidelity) for p in sorted(self.best)]

    def __getitem__(self, p):
        return self.best[self.key(p)]

    def __contains__(self, p):
        return self.key(p) in self.best

    def __len__(self):
        return len(self.best)


def _point_rng(seed, p, salt=0):
    return np.random.default_rng([int(seed), int(round(p * 100)), int(salt)])


def _optimize_point(config, p):
    """Full per-probability flow; returns (p, best result or None, error message)."""
    rng = _point_rng(config.seed, p)
    d, s, r = config.d, config.s, config.r
    if config.erasure:
        try:
            res = full_erasure_optimize(d, s, r, p, random_state=rng)
        except (SubproblemInfeasible, ValueError) as exc:
            return p, None, str(exc)
        return p, res, ""
    best = None
    seeds = []
    if config.convex_iteration:
        scan = line_scan(d, s, r, p, random_state=rng)
        if scan.feasible:
            best = ProtocolResult(d, s, r, p, scan.certified_fidelity, scan.state, scan.map, "convex_iteration")
            seeds.append(scan.state)
    if config.outermap:
        try:
            om = outer_map_search(d, s, r, p, seed_map=best.map if best else None, random_state=rng)
            if best is None or om.fidelity > best.fidelity:
                best = om
            seeds.insert(0, om.state)
        except SubproblemInfeasible as exc:
            log.info("outer map search failed at p=%.2f: %s", p, exc)
    seeds += [None] * config.n_restarts
    for seed in seeds:
        try:
            res = outer_state_search(d, s, r, p, seed, maxiter=config.maxiter, random_state=rng)
        except SubproblemInfeasible:
            continue
        if best is None or res.fidelity > best.fidelity:
            best = res
    if best is None:
        return p, None, "no feasible protocol found"
    return p, best, ""


def scale_to(result, p):
    """Same state, map scaled by p / p_dist: identical fidelity at a lower success probability."""
    if p > result.p_dist + 1e-12:
        raise ValueError("can only scale a map down")
    choi = ChoiMap(result.map.d, result.map.r, result.map.coeffs * (p / result.p_dist))
    return replace(result, p_dist=p, map=choi, source="scaled")


def run(config, progress=None):
    """Optimize every grid probability, then propagate improvements between neighbors."""
    grid = config.grid
    store = ResultStore(grid)
    if config.workers > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            outcomes = list(ex.map(_optimize_point, [config] * len(grid), grid))
    else:
        outcomes = [_optimize_point(config, p) for p in grid]
    for p, res, err in outcomes:
        if res is None:
            store.failures[store.key(p)] = err
        else:
            store.update(res)
        if progress:
            progress(p, res)
    if config.erasure:
        return store

    # neighbor seeding, FIFO with (p, state-hash) deduplication
    step = 0.01
    queue = deque()
    seen = set()

    def push(p, res):
        k = store.key(p)
        if k < grid[0] - 1e-9 or k > grid[-1] + 1e-9:
            return
        tag = (k, res.state_hash())
        if tag not in seen:
            seen.add(tag)
            queue.append((k, res))

    for k in sorted(store.best):
        push(k - step, store.best[k])
        push(k + step, store.best[k])
    while queue:
        p, seed = queue.popleft()
        rng = _point_rng(config.seed, p, salt=1 + len(seen))
        try:
            res = outer_state_search(config.d, config.s, config.r, p, seed.state, maxiter=config.maxiter, random_state=rng)
        except SubproblemInfeasible:
            continue
        if store.update(res, min_gain=config.threshold):
            push(p - step, res)
            push(p + step, res)
            store.failures.pop(store.key(p), None)
    _monotone_pass(store)
    return store


def _monotone_pass(store):
    """Lower probabilities can always reuse a higher-probability protocol with a scaled map."""
    keys = sorted(store.grid, reverse=True)
    best_above = None
    for p in keys:
        k = store.key(p)
        cur = store.best.get(k)
        if best_above is not None and (cur is None or cur.fidelity < best_above.fidelity):
            store.best[k] = scale_to(best_above, k)
            store.failures.pop(k, None)
            cur = store.best[k]
        if cur is not None and (best_above is None or cur.fidelity >= best_above.fidelity):
            best_above = cur


# -- multiple maps, one per arrival count -------------------------------------


def arrival_weights(s, p_trans):
    return {j: comb(s, j) * p_trans**j * (1 - p_trans) ** (s - j) for j in range(0, s + 1)}


@dataclass
class MultiResult:
    d: int
    s: int
    p_trans: float
    p_tot: float
    fidelity: float
    state: SymmetricState = field(repr=False)
    maps: dict = field(repr=False)
    weights: dict = field(repr=False)
    source: str = "multi_r"

    @property
    def p_dist(self):
        return self.p_tot

    def final_state(self):
        """Subnormalized two-qubit output summed over arrival counts."""
        out = np.zeros((4, 4))
        for j, choi in self.maps.items():
            out += self.weights[j] * evaluate(self.state, choi, loss_tensor(self.d, self.s, j)).matrix
        return out


def _solve_multi(sigmas, weights, ns, p_tot, feas_tol=1e-8, gap_tol=1e-8):
    prob = sdp.SdpProblem()
    blks = [prob.add_psd(2 * n) for n in ns]
    tr_row = None
    obj = None
    for blk, sig, w, n in zip(blks, sigmas, weights, ns):
        row_t = w * prob.inner_row(blk, _lift(sig, n))
        row_o = w * prob.inner_row(blk, sig / (2 * p_tot))
        tr_row = row_t if tr_row is None else tr_row + row_t
        obj = row_o if obj is None else obj + row_o
        prob.add_psd_constraint(-(_ptrace_svec(n) @ prob.selector(blk)), svec(np.eye(n)), n)
    eq = prob.add_eq(tr_row, [-p_tot])
    prob.set_objective(obj, "max")
    sol = prob.solve(feas_tol, gap_tol)
    if sol.status not in (sdp.OPTIMAL, sdp.INACCURATE):
        return None
    return sol.objective, sol.blocks, float(sol.duals[eq][0])


def multi_r_search(d, s, p_trans, p_tot, seed_state=None, probability_floor=1e-3, maxiter=200, random_state=None):
    """Pure-state BFGS for the one-map-per-arrival-count program at fixed total probability."""
    d, s = check_dims(d, s)
    p_trans = check_probability(p_trans, "p_trans", allow_zero=True)
    p_tot = check_probability(p_tot, "p_tot")
    rng = check_random_state(random_state)
    w_all = arrival_weights(s, p_trans)
    wmax = max(w_all[j] for j in range(1, s + 1))
    js = [j for j in range(1, s + 1) if w_all[j] >= probability_floor * wmax and w_all[j] > 0]
    if p_tot > sum(w_all[j] for j in js) + 1e-12:
        raise SubproblemInfeasible(f"p_tot={p_tot} exceeds the retained arrival probability")
    kraus = {j: loss_tensor(d, s, j).kraus for j in js}
    ns = [dicke_dim(j, d) for j in js]
    ws = [w_all[j] for j in js]
    best = {}

    def fun(psi):
        nrm2 = psi @ psi
        rho = np.outer(psi, psi) / nrm2
        sig = [kraus_apply(rho, kraus[j]) for j in js]
        out = _solve_multi(sig, ws, ns, p_tot)
        if out is None:
            return 1.0, np.zeros_like(psi)
        F, blocks, mu = out
        if F > best.get("F", -np.inf):
            best.update(F=F, psi=psi / np.sqrt(nrm2), maps=blocks)
        g = np.zeros((psi.size, psi.size))
        for j, w, c, n in zip(js, ws, blocks, ns):
            g += w * kraus_adjoint(c / (2 * p_tot) + mu * _lift(c, n), kraus[j])
        gpsi = g @ psi
        grad = 2 * (gpsi - (psi @ gpsi) * psi / nrm2) / nrm2
        return -F, -grad

    n_s = 2 * dicke_dim(s, d)
    if seed_state is None:
        psi0 = rng.standard_normal(n_s)
    elif isinstance(seed_state, SymmetricState):
        psi0 = seed_state.dominant_vector()
    else:
        psi0 = np.asarray(seed_state, dtype=float)
    psi0 = psi0 / np.linalg.norm(psi0)
    mon = _StallMonitor(maxiter)
    fun(psi0)
    try:
        minimize(fun, psi0, jac=True, method="BFGS", callback=lambda intermediate_result: mon(-intermediate_result.fun),
                 options={"gtol": 1e-9, "maxiter": maxiter})
    except (StopIteration, np.linalg.LinAlgError):
        pass
    if not best:
        raise SubproblemInfeasible(f"multi-map program failed for p_tot={p_tot}")
    maps = {j: ChoiMap(d, j, c) for j, c in zip(js, best["maps"])}
    return MultiResult(d, s, p_trans, p_tot, best["F"], SymmetricState.from_vector(d, s, best["psi"]), maps,
                       {j: w_all[j] for j in js})


def run_multi_r(d, s, p_trans, p_tot_grid, probability_floor=1e-3, seed=0, n_restarts=2, seed_r=2):
    """One state and per-arrival-count maps for each total success probability."""
    d, s = check_dims(d, s)
    grid = check_grid(p_tot_grid)
    store = ResultStore(grid)
    r0 = min(seed_r, s)
    p_r0 = sum(arrival_weights(s, p_trans)[j] for j in range(r0, s + 1))
    for p in grid:
        rng = _point_rng(seed, p, salt=7)
        seeds = []
        if p_r0 > 0 and p / p_r0 <= 1:
            scan = line_scan(d, s, r0, min(1.0, p / p_r0), random_state=rng)
            if scan.feasible:
                seeds.append(scan.state)
        seeds += [None] * n_restarts
        for st in seeds:
            try:
                res = multi_r_search(d, s, p_trans, p, st, probability_floor, random_state=rng)
            except SubproblemInfeasible as exc:
                store.failures[store.key(p)] = str(exc)
                break
            store.update(res)
    for k in list(store.failures):
        if k in store.best:
            store.failures.pop(k)
    return store
