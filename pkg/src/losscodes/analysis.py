"""Channel, key-rate, entropy, yield and swap analysis plus result post-processing."""

import logging
from dataclasses import dataclass, field, replace
from itertools import permutations
from math import comb, log

import numpy as np
from scipy.optimize import minimize
from scipy.stats import binom, entropy

from . import sdp
from ._validation import check_probability
from .dicke import ChoiMap, SymmetricState, TwoQubitState, dicke_dim, evaluate, loss_tensor, transversal_operator
from .subproblems import ProtocolResult, SubproblemInfeasible, search_pure_state

log_ = logging.getLogger(__name__)

DB_TO_NEPER = log(10) / 10


def db_to_alpha(db_per_km):
    """Attenuation in dB/km -> 1/km (0.2 dB/km gives 0.046/km)."""
    return DB_TO_NEPER * float(db_per_km)


def parse_alpha(text):
    """'0.2dB' -> dB/km, anything else -> 1/km."""
    text = str(text).strip()
    if text.lower().endswith("db"):
        return db_to_alpha(float(text[:-2]))
    return float(text)


@dataclass(frozen=True)
class ChannelModel:
    alpha: float = 0.046
    L: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.L < 0:
            raise ValueError(f"need alpha >= 0 and L >= 0, got alpha={self.alpha}, L={self.L}")

    @property
    def p_trans(self):
        return float(np.exp(-self.alpha * self.L))

    @property
    def p_loss(self):
        return 1.0 - self.p_trans


def transmission(ch, L=None):
    """e^{-alpha L}; accepts a ChannelModel or (alpha, L)."""
    if L is not None:
        ch = ChannelModel(ch, L)
    return ch.p_trans


def multiplex_success(s, p_trans):
    """At least one of s photons arrives."""
    p = check_probability(p_trans, "p_trans", allow_zero=True)
    return 1.0 - (1.0 - p) ** s


def min_multiplex(p_trans, target=0.5):
    s = 1
    while multiplex_success(s, p_trans) < target:
        s += 1
    return s


def arrival_distribution(s, r, p_trans):
    """Probability that at least r of s photons arrive."""
    p = check_probability(p_trans, "p_trans", allow_zero=True)
    if r <= 0:
        return 1.0
    return float(binom.sf(r - 1, s, p))


def binary_entropy(e):
    e = float(np.clip(e, 0.0, 1.0))
    return float(entropy([e, 1 - e], base=2))


def secret_key_rate(e_X, e_Z, p):
    """max{0, 1 - 2H(max(e_X, e_Z))} * p."""
    return max(0.0, 1.0 - 2.0 * binary_entropy(max(e_X, e_Z))) * p


# -- redundant parity encoding ------------------------------------------------


def rpe_success(m, n, p_trans):
    if m < 1 or n < 1:
        raise ValueError(f"need m, n >= 1, got m={m}, n={n}")
    p = check_probability(p_trans, "p_trans", allow_zero=True)
    q = 1.0 - p
    return (1 - q**m) ** n - (1 - q**m - p**m) ** n


def rpe_scan(p_trans, threshold=1e-3, n_values=range(1, 201), m_max=200):
    """{n: smallest m with rpe_success(m, n) below threshold}; n with no such m are skipped."""
    out = {}
    for n in n_values:
        for m in range(1, m_max + 1):
            if rpe_success(m, n, p_trans) < threshold:
                out[n] = m
                break
    return out


def rpe_advantage(p_trans, m_max=200, n_max=200):
    """Best (m, n) beating direct transmission, or None (m = n = 1 is direct transmission)."""
    best = None
    for n in range(1, n_max + 1):
        for m in range(1, m_max + 1):
            if m == n == 1:
                continue
            val = rpe_success(m, n, p_trans)
            if val > p_trans + 1e-12 and (best is None or val > best[2]):
                best = (m, n, val)
    return best


# -- entropies, yields ---------------------------------------------------------

_BELL = np.array(
    [[1, 0, 0, 1], [1, 0, 0, -1], [0, 1, 1, 0], [0, 1, -1, 0]], dtype=float
) / np.sqrt(2)  # rows: Phi+, Phi-, Psi+, Psi-


def bell_weights(rho):
    rho = np.asarray(rho, dtype=float)
    return np.einsum("ki,ij,kj->k", _BELL, rho, _BELL)


def hashing_entropy(final, p_tot=1.0):
    """Shannon entropy of the Bell-dephased p_tot*rho + (1 - p_tot)*1/4."""
    rho = final.matrix if isinstance(final, TwoQubitState) else np.asarray(final, dtype=float)
    tr = np.trace(rho)
    if tr <= 0:
        raise ValueError("final state has non-positive trace")
    rho = rho / tr
    mixed = p_tot * rho + (1 - p_tot) * np.eye(4) / 4
    w = np.clip(bell_weights(mixed), 0.0, None)
    return float(entropy(w, base=2))


def direct_entropy(ch):
    return hashing_entropy(np.outer(_BELL[0], _BELL[0]), ch.p_trans)


def critical_distance(entropy_fn, alpha=0.046, lo=0.0, hi=200.0, tol=1e-6):
    """Smallest L with entropy_fn(ChannelModel(alpha, L)) >= 1, by bisection."""
    if entropy_fn(ChannelModel(alpha, hi)) < 1:
        return np.inf
    if entropy_fn(ChannelModel(alpha, lo)) >= 1:
        return lo
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if entropy_fn(ChannelModel(alpha, mid)) >= 1:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2


def error_rates(rho):
    """(e_X, e_Z): anticorrelation probabilities of a two-qubit state in the X and Z bases."""
    rho = np.asarray(rho, dtype=float)
    rho = rho / np.trace(rho)
    e_z = rho[1, 1] + rho[2, 2]
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    hh = np.kron(h, h)
    rx = hh @ rho @ hh
    e_x = rx[1, 1] + rx[2, 2]
    return float(e_x), float(e_z)


def _final_state(result):
    if hasattr(result, "final_state"):
        return result.final_state()
    return evaluate(result.state, result.map, loss_tensor(result.d, result.s, result.r)).matrix


def _success(result, ch):
    r = getattr(result, "r", None)
    if r is None:  # multi-map results carry the total probability already
        return result.p_dist
    return arrival_distribution(result.s, result.r, ch.p_trans) * result.p_dist


@dataclass(frozen=True)
class YieldRow:
    L: float
    per_packet: float
    per_photon: float
    best_packet: tuple = ()
    best_photon: tuple = ()


def _protocols(results):
    if results is None:
        return []
    if hasattr(results, "best"):
        return list(results.best.values())
    out = []
    for item in results:
        if hasattr(item, "best"):
            out.extend(item.best.values())
        else:
            out.append(item)
    return out


def inverse_yield(results, ch_list, include_direct=True):
    """Minimal packets (and photons) per distilled perfect pair at each distance.

    A protocol succeeds with P(at least r of s arrive) * p_dist and the
    heralded output is hashed at rate 1 - S(final).  Direct transmission
    counts as s = 1 with S = 0.
    """
    protos = _protocols(results)
    if not protos and not include_direct:
        raise ValueError("no protocols to evaluate")
    rates = []
    for res in protos:
        S = hashing_entropy(_final_state(res), 1.0)
        rates.append((res, 1.0 - S))
    rows = []
    for ch in ch_list:
        best_k, best_p = (np.inf, ()), (np.inf, ())
        if include_direct:
            v = 1.0 / ch.p_trans if ch.p_trans > 0 else np.inf
            best_k, best_p = (v, ("direct",)), (v, ("direct",))
        for res, rate in rates:
            y = _success(res, ch) * rate
            if y <= 0:
                continue
            tag = (res.d, res.s, getattr(res, "r", None), res.p_dist)
            if 1 / y < best_k[0]:
                best_k = (1 / y, tag)
            if res.s / y < best_p[0]:
                best_p = (res.s / y, tag)
        rows.append(YieldRow(ch.L, best_k[0], best_p[0], best_k[1], best_p[1]))
    return rows


def key_rate_table(results, ch_list, include_direct=True):
    """Best repeaterless secret key rate per distance: [(L, rate)]."""
    protos = _protocols(results)
    errs = []
    for res in protos:
        errs.append((res, error_rates(_final_state(res))))
    rows = []
    for ch in ch_list:
        best = ch.p_trans if include_direct else 0.0
        for res, (ex, ez) in errs:
            best = max(best, secret_key_rate(ex, ez, _success(res, ch)))
        rows.append((ch.L, best))
    return rows


def best_fidelity_by_total(results, ch, step=0.01):
    """Best F per total success probability (P_trans * p_dist) rounded down to the grid."""
    table = {}
    for res in _protocols(results):
        p_tot = _success(res, ch)
        key = np.floor(p_tot / step + 1e-9) * step
        if key <= 0:
            continue
        key = round(key, 10)
        table[key] = max(table.get(key, 0.0), res.fidelity)
    # a protocol with more probability also serves every lower grid point
    keys = sorted(table, reverse=True)
    best = 0.0
    for k in keys:
        best = max(best, table[k])
        table[k] = best
    return sorted(table.items())


# -- entanglement swapping -----------------------------------------------------

_ZB = np.eye(2)
_XB = np.array([[1, 1], [1, -1]]) / np.sqrt(2)  # columns |+>, |->

# (basis, outcome group, correlated?) per Bell assignment M1..M4 = Phi+, Psi+, Phi-, Psi-
_E_X_TERMS = [((0, 1), (1, 0)), ((0, 1), (1, 0)), ((0, 0), (1, 1)), ((0, 0), (1, 1))]
_E_Z_TERMS = [((0, 1), (1, 0)), ((0, 0), (1, 1)), ((0, 1), (1, 0)), ((0, 0), (1, 1))]


@dataclass
class SwapInstrument:
    povm: list = field(repr=False)  # four 4x4 PSD elements on (R1, R2)
    e_X: float = np.nan
    e_Z: float = np.nan

    def is_valid(self, atol=1e-7):
        total = sum(self.povm)
        return bool(np.allclose(total, np.eye(4), atol=atol)) and all(np.linalg.eigvalsh(m)[0] > -atol for m in self.povm)


@dataclass
class SwapResult:
    e_X: float
    e_Z: float
    instruments: dict = field(repr=False)
    mode: str = "separate"

    @property
    def key_error(self):
        return max(self.e_X, self.e_Z)


def _swap_functionals(rho_f):
    """Matrices Q with e_X = sum_k <M_k, Q_X[k]>, likewise for e_Z."""
    rho = np.asarray(rho_f, dtype=float)
    rho = rho / np.trace(rho)
    r4 = rho.reshape(2, 2, 2, 2)  # (first, second, first', second')

    def cond_first(v):  # <v|_A rho_AR1 |v>_A  -> operator on R1
        return np.einsum("i,ijkl,k->jl", v, r4, v)

    def cond_second(v):  # <v|_B rho_R2B |v>_B -> operator on R2
        return np.einsum("j,ijkl,l->ik", v, r4, v)

    def q(basis, a, b):
        return np.kron(cond_first(basis[:, a]), cond_second(basis[:, b]))

    qx = [sum(q(_XB, a, b) for a, b in terms) for terms in _E_X_TERMS]
    qz = [sum(q(_ZB, a, b) for a, b in terms) for terms in _E_Z_TERMS]
    return qx, qz


def swap_error_rates(povm, rho_f):
    qx, qz = _swap_functionals(rho_f)
    ex = sum(float(np.sum(m * q)) for m, q in zip(povm, qx))
    ez = sum(float(np.sum(m * q)) for m, q in zip(povm, qz))
    return ex, ez


def bell_projectors():
    """Phi+, Psi+, Phi-, Psi- projectors on (R1, R2)."""
    return [np.outer(_BELL[k], _BELL[k]) for k in (0, 2, 1, 3)]


def bell_projection_swap(rho_f):
    """Brute force over all assignments of Bell projectors to the four outcomes."""
    base = bell_projectors()
    best = {}
    for perm in permutations(range(4)):
        povm = [base[k] for k in perm]
        ex, ez = swap_error_rates(povm, rho_f)
        if ex < best.get("e_X", (np.inf,))[0]:
            best["e_X"] = (ex, perm)
        if ez < best.get("e_Z", (np.inf,))[0]:
            best["e_Z"] = (ez, perm)
    return best["e_X"][0], best["e_Z"][0]


def _swap_sdp(qx, qz, target):
    prob = sdp.SdpProblem()
    blks = [prob.add_psd(4) for _ in range(4)]
    t = prob.add_scalar() if target == "minimax" else None
    for i in range(4):
        for j in range(i, 4):
            prob.add_eq(sum(prob.entry(b, i, j) for b in blks), -1.0 if i == j else 0.0)
    ex = sum(prob.inner_row(b, q) for b, q in zip(blks, qx))
    ez = sum(prob.inner_row(b, q) for b, q in zip(blks, qz))
    if target == "minimax":
        prob.add_nonneg(prob.scalar(t) - ex)
        prob.add_nonneg(prob.scalar(t) - ez)
        prob.set_objective(prob.scalar(t), "min")
    else:
        prob.set_objective(ex if target == "x" else ez, "min")
    sol = prob.solve(feas_tol=1e-12, gap_tol=1e-12)
    if sol.status not in (sdp.OPTIMAL, sdp.INACCURATE):
        raise RuntimeError(f"swap program failed with status {sol.status}")
    return [(m + m.T) / 2 for m in sol.blocks[:4]]


def optimal_swap(rho_f, mode="separate"):
    """Deterministic four-outcome swap minimizing the X and Z error rates.

    ``separate`` solves one program per basis and reports both minima;
    ``minimax`` uses a single instrument minimizing max(e_X, e_Z).
    """
    rho = rho_f.matrix if isinstance(rho_f, TwoQubitState) else np.asarray(rho_f, dtype=float)
    qx, qz = _swap_functionals(rho)
    if mode == "separate":
        inst = {}
        for tgt in ("x", "z"):
            povm = _swap_sdp(qx, qz, tgt)
            ex, ez = swap_error_rates(povm, rho)
            inst[tgt] = SwapInstrument(povm, ex, ez)
        return SwapResult(max(inst["x"].e_X, 0.0), max(inst["z"].e_Z, 0.0), inst, mode)
    if mode == "minimax":
        povm = _swap_sdp(qx, qz, "minimax")
        ex, ez = swap_error_rates(povm, rho)
        return SwapResult(max(ex, 0.0), max(ez, 0.0), {"minimax": SwapInstrument(povm, ex, ez)}, mode)
    raise ValueError(f"mode must be 'separate' or 'minimax', got {mode!r}")


def werner_state(F):
    phi = np.outer(_BELL[0], _BELL[0])
    return F * phi + (1 - F) / 3 * (np.eye(4) - phi)


# -- post-processing -----------------------------------------------------------

NONZERO_TOL = 1e-6


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _qudit_rotation(theta, d):
    o = np.eye(d)
    o[:2, :2] = _rotation(theta)
    return o


def gauge_transform(result, alpha, beta):
    """Apply R(alpha) on Alice's qubit and a transversal rotation beta on the qudits (state and map)."""
    d, s, r = result.d, result.s, result.r
    o = _qudit_rotation(beta, d)
    ra = _rotation(alpha)
    ks = np.kron(ra, transversal_operator(o, s))
    kr = np.kron(ra, transversal_operator(o, r))
    state = SymmetricState(d, s, ks @ result.state.coeffs @ ks.T)
    choi = ChoiMap(d, r, kr @ result.map.coeffs @ kr.T)
    return replace(result, state=state, map=choi)


def count_nonzero(result, tol=NONZERO_TOL):
    return int(np.sum(np.abs(result.state.dominant_vector()) > tol))


def _l1(result, alpha, beta):
    return float(np.sum(np.abs(gauge_transform(result, alpha, beta).state.dominant_vector())))


def postprocess(result, n_grid=24, tol=NONZERO_TOL, restart_maxiter=200):
    """Sparsify a protocol via its gauge freedoms; falls back to the input if fidelity drops."""
    if not isinstance(result, ProtocolResult):
        raise TypeError("postprocess expects a ProtocolResult")
    try:
        return _postprocess(result, n_grid, tol, restart_maxiter)
    except (SubproblemInfeasible, np.linalg.LinAlgError, ValueError) as exc:
        log_.debug("postprocess fell back to input: %s", exc)
        return result


def _postprocess(result, n_grid, tol, restart_maxiter):
    _, F0 = result.reevaluate()
    best = (count_nonzero(result, tol), _l1(result, 0.0, 0.0), 0.0, 0.0)
    angles = np.linspace(0, np.pi, n_grid, endpoint=False)
    starts = sorted(((_l1(result, a, b), a, b) for a in angles for b in angles))[:4]
    for _, a0, b0 in starts:
        opt = minimize(lambda z: _l1(result, z[0], z[1]), [a0, b0], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 400})
        cand = gauge_transform(result, *opt.x)
        key = (count_nonzero(cand, tol), opt.fun)
        if key < best[:2]:
            best = (*key, *opt.x)
    rotated = gauge_transform(result, best[2], best[3])
    psi = rotated.state.dominant_vector()
    support = np.flatnonzero(np.abs(psi) > tol)
    if support.size == psi.size:
        return rotated
    # re-optimize on the surviving support only
    T = loss_tensor(result.d, result.s, result.r)
    F, full, choi = search_pure_state(
        T.kraus, dicke_dim(result.r, result.d), result.p_dist, psi, restart_maxiter, support=support
    )
    full = full.copy()
    full[np.abs(full) <= tol] = 0.0
    cand = replace(
        result,
        fidelity=F,
        state=SymmetricState.from_vector(result.d, result.s, full),
        map=ChoiMap(result.d, result.r, choi),
        source=result.source + "+post",
    )
    p1, F1 = cand.reevaluate()
    # pruning alone, keeping the rotated map, may already be at least as good
    pruned = replace(rotated, state=SymmetricState.from_vector(result.d, result.s, np.where(np.abs(psi) > tol, psi, 0.0)))
    p2, F2 = pruned.reevaluate()
    options = [(F1, p1, cand), (F2, p2, replace(pruned, source=result.source + "+post"))]
    options = [o for o in options if o[0] >= F0 - 1e-6 and abs(o[1] - result.p_dist) <= 1e-6]
    if not options:
        return rotated
    F, _, out = max(options, key=lambda o: o[0])
    return replace(out, fidelity=F)
