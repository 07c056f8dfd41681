"""Reference maps and codes: BBPSSW, CNOT double selection, the five-qubit code
and a catalogue of closed-form optimal protocols used as fixtures."""

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations, product
from math import comb, sqrt

import numpy as np

from ._validation import check_dims
from .dicke import ChoiMap, SymmetricState, evaluate, loss_tensor
from .full_space import configuration_kraus, dicke_isometry
from .subproblems import FixedMapProblem, SubproblemInfeasible, optimize_state_given_map, solve_map_program

# -- receiver circuits ---------------------------------------------------------

_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=float)
_H = np.array([[1, 1], [1, -1]]) / sqrt(2)


def _gate(op, targets, nq):
    """Embed a 1- or 2-qubit gate acting on ``targets`` (in that order) into nq qubits."""
    dim = 2**nq
    out = np.zeros((dim, dim))
    k = len(targets)
    for col in range(dim):
        bits = list(np.unravel_index(col, (2,) * nq))
        sub = int(np.ravel_multi_index([bits[t] for t in targets], (2,) * k))
        for new_sub in range(2**k):
            amp = op[new_sub, sub]
            if amp == 0:
                continue
            nb = list(bits)
            for t, v in zip(targets, np.unravel_index(new_sub, (2,) * k)):
                nb[t] = int(v)
            out[int(np.ravel_multi_index(nb, (2,) * nq)), col] += amp
    return out


def _measure(nq, keep, outcomes):
    """Projection <m| on every qubit except ``keep``: maps 2^nq -> 2."""
    out = np.zeros((2, 2**nq))
    others = [q for q in range(nq) if q != keep]
    for b in range(2):
        bits = [0] * nq
        bits[keep] = b
        for q, m in zip(others, outcomes):
            bits[q] = m
        out[b, int(np.ravel_multi_index(bits, (2,) * nq))] = 1.0
    return out


def _choi_from_kraus(kraus_full, r):
    """Choi matrix of X -> K X K^T restricted to the symmetric input subspace."""
    k = kraus_full @ dicke_isometry(r, 2)
    w = k.reshape(-1)  # index (b, dicke position)
    return ChoiMap(2, r, np.outer(w, w))


def bbpssw_choi(outcome=0):
    """CNOT (0 -> 1), measure qubit 1, keep ``outcome``; output qubit 0."""
    k = _measure(2, 0, [outcome]) @ _gate(_CNOT, [0, 1], 2)
    return _choi_from_kraus(k, 2)


def cnot_double_selection_choi(outcomes=(0, 0)):
    """CNOT 0 -> 1, CNOT 2 -> 1, Hadamard on 2, measure qubits 1 and 2; output qubit 0."""
    u = _gate(_H, [2], 3) @ _gate(_CNOT, [2, 1], 3) @ _gate(_CNOT, [0, 1], 3)
    k = _measure(3, 0, list(outcomes)) @ u
    return _choi_from_kraus(k, 3)


def max_success_probability(choi, s):
    """Largest p_dist any input state reaches with a fixed map."""
    T = loss_tensor(choi.d, s, choi.r)
    from .dicke import kraus_adjoint
    from .subproblems import _lift

    op = kraus_adjoint(_lift(choi.coeffs, choi.n), T.kraus)
    return float(np.linalg.eigvalsh(op)[-1])


def baseline_fidelity(choi, s, p_dist):
    """Best fidelity of a fixed map with an optimized input state, or nan if p is unreachable."""
    try:
        return optimize_state_given_map(FixedMapProblem(choi, p_dist, s))[1]
    except SubproblemInfeasible:
        return np.nan


def best_outcome_fidelity(chois, s, p_dist):
    """Kept outcome is the one with the highest optimized fidelity."""
    vals = [baseline_fidelity(c, s, p_dist) for c in chois]
    vals = [v for v in vals if np.isfinite(v)]
    return max(vals) if vals else np.nan


# -- five-qubit code -----------------------------------------------------------


@lru_cache(maxsize=None)
def five_qubit_logical():
    """Real logical basis |0_L>, |1_L> of the perfect five-qubit code."""
    X = np.array([[0, 1], [1, 0]], dtype=float)
    Z = np.diag([1.0, -1.0])
    I = np.eye(2)
    gens = []
    for shift in range(4):
        pattern = [X, Z, Z, X, I]
        ops = [pattern[(q - shift) % 5] for q in range(5)]
        g = ops[0]
        for o in ops[1:]:
            g = np.kron(g, o)
        gens.append(g)
    proj = np.eye(32)
    for g in gens:
        proj = proj @ (np.eye(32) + g) / 2
    zero = proj[:, 0] / np.linalg.norm(proj[:, 0])
    xall = X
    for _ in range(4):
        xall = np.kron(xall, X)
    one = xall @ zero
    return zero, one


def five_qubit_state():
    zero, one = five_qubit_logical()
    psi = np.concatenate([zero, one]) / sqrt(2)
    return np.outer(psi, psi)


def five_qubit_configuration_results(p_dist=1.0):
    """{surviving slots: (fidelity, probability)} with the optimal map per configuration."""
    rho = five_qubit_state()
    out = {}
    for j in range(0, 6):
        for cfg in combinations(range(5), j):
            kraus = configuration_kraus(2, 5, cfg)
            from .dicke import kraus_apply

            res = solve_map_program(kraus_apply(rho, kraus), 2**j, p_dist)
            out[cfg] = res
    return out


def five_qubit_final_state(p_trans, mode="full"):
    """Unit-trace final two-qubit state averaged over arrival patterns."""
    from .dicke import apply_map, kraus_apply

    if mode not in ("full", "reduced"):
        raise ValueError(f"mode must be 'full' or 'reduced', got {mode!r}")
    rho = five_qubit_state()
    final = np.zeros((4, 4))
    for j in range(0, 6):
        w = comb(5, j) * p_trans**j * (1 - p_trans) ** (5 - j)
        if w == 0:
            continue
        cfgs = list(combinations(range(5), j))
        sigmas = [kraus_apply(rho, configuration_kraus(2, 5, c)) for c in cfgs]
        n = 2**j
        if mode == "full":
            for sig in sigmas:
                res = solve_map_program(sig, n, 1.0)
                final += w / len(cfgs) * _apply_full(res.matrix, sig, n)
        else:
            avg = sum(sigmas) / len(sigmas)
            res = solve_map_program(avg, n, 1.0)
            final += w * _apply_full(res.matrix, avg, n)
    return final


def _apply_full(choi, sigma, n):
    c4 = choi.reshape(2, n, 2, n)
    s4 = sigma.reshape(2, n, 2, n)
    return np.einsum("bkcl,akel->abec", c4, s4).reshape(4, 4)


def five_qubit_code_entropy(ch, mode="full"):
    """One-way hashing entropy of the five-qubit code over a channel model."""
    from .analysis import hashing_entropy, transmission

    final = five_qubit_final_state(transmission(ch), mode)
    return hashing_entropy(final, 1.0)


# -- closed-form protocols -----------------------------------------------------


@dataclass(frozen=True)
class FixtureProtocol:
    name: str
    d: int
    s: int
    r: int
    p_dist: float
    state: SymmetricState = field(repr=False)
    map: ChoiMap = field(repr=False)
    expected_fidelity: float
    tolerance: float = 1e-9

    def evaluate(self):
        out = evaluate(self.state, self.map, loss_tensor(self.d, self.s, self.r))
        return out.probability, out.fidelity


_H2 = 1 / sqrt(2)


def high_loss_fixture(s, r):
    d, s, r = check_dims(2, s, r)
    if s < 2 * r - 1 or r < 1:
        raise ValueError("high-loss family needs s >= 2r - 1, r >= 1")
    choi = ChoiMap.from_projectors(2, r, [{(0, 1): _H2, (1, 0): _H2}])
    state = SymmetricState.from_terms(2, s, {(0, 1): sqrt(r / (r + s)), (1, 0): sqrt(s / (r + s))})
    return FixtureProtocol(f"high-loss s={s} r={r}", 2, s, r, 1.0, state, choi, 0.5 + r / (2 * s), 1e-12)


def single_erasure_fixture(r):
    """s = r + 1, r > 2: deterministic recovery from one lost particle."""
    if r <= 2:
        raise ValueError("family needs r > 2")
    s = r + 1
    choi = ChoiMap.from_projectors(2, r, [{(0, 2): _H2, (1, 0): _H2}, {(0, 1): _H2, (1, r): _H2}])
    state = SymmetricState.from_terms(
        2, s, {(0, 2): _H2, (1, 0): sqrt((r - 1) / (2 * (r + 1))), (1, s): 1 / sqrt(r + 1)}
    )
    return FixtureProtocol(f"single erasure s={s} r={r}", 2, s, r, 1.0, state, choi, 1.0, 1e-12)


def double_erasure_fixture(r):
    """s = r + 2, r > 4: deterministic recovery from two lost particles."""
    if r <= 4:
        raise ValueError("family needs r > 4")
    s = r + 2
    x = sqrt(1 / (r * (r - 1)))
    y = sqrt(0.5 - x * x)
    choi = ChoiMap.from_projectors(
        2,
        r,
        [
            {(0, 1): _H2, (1, r - 1): _H2},
            {(0, 2): _H2, (1, 0): y, (1, r): x},
            {(0, 0): x, (0, r): -y, (1, r - 2): _H2},
        ],
    )
    a, b = 0.5 * sqrt(1 + 2 / r), 0.5 * sqrt(1 - 2 / r)
    state = SymmetricState.from_terms(2, s, {(0, 2): a, (1, s - 2): a, (0, s): -b, (1, 0): b})
    return FixtureProtocol(f"double erasure s={s} r={r}", 2, s, r, 1.0, state, choi, 1.0, 1e-12)


def fixture_5_3():
    choi = ChoiMap.from_projectors(2, 3, [{(0, 1): _H2, (1, 3): _H2}, {(0, 0): _H2, (1, 2): _H2}])
    state = SymmetricState.from_terms(
        2, 5, {(0, 1): 0.5, (0, 2): sqrt(7 / 30), (1, 3): 1 / sqrt(6), (1, 4): sqrt(7 / 20)}
    )
    return FixtureProtocol("s=5 r=3", 2, 5, 3, 1.0, state, choi, 0.8, 1e-12)


def fixture_8_5():
    t = 2 * sqrt(5)
    choi = ChoiMap.from_projectors(
        2,
        5,
        [
            {(0, 1): _H2, (1, 4): _H2},
            {(0, 2): _H2, (1, 0): 3 / t, (1, 5): 1 / t},
            {(0, 0): 1 / t, (0, 5): -3 / t, (1, 3): _H2},
        ],
    )
    state = SymmetricState.from_terms(
        2,
        8,
        {(0, 2): sqrt(7 / 15), (0, 7): -1 / sqrt(30), (1, 0): 2 / sqrt(15), (1, 5): sqrt(7 / 30)},
    )
    return FixtureProtocol("s=8 r=5", 2, 8, 5, 1.0, state, choi, 27 / 32, 1e-12)


def fixture_10_7(a=0.305, b=0.282, x=0.691, y=0.561):
    ca, cb = sqrt(0.5 - a * a), sqrt(0.5 - b * b)
    choi = ChoiMap.from_projectors(
        2,
        7,
        [
            {(0, 0): a, (0, 4): -ca, (1, 2): b, (1, 6): cb},
            {(0, 1): cb, (0, 5): -b, (1, 3): ca, (1, 7): a},
            {(0, 2): cb, (0, 6): -b, (1, 4): a, (1, 0): ca},
            {(0, 3): -a, (0, 7): ca, (1, 5): cb, (1, 1): b},
        ],
    )
    z = sqrt((1 - x * x - y * y) / 2)
    state = SymmetricState.from_terms(
        2,
        10,
        {
            (0, 2): x * _H2,
            (1, 8): x * _H2,
            (0, 6): -y * _H2,
            (1, 4): y * _H2,
            (0, 10): z,
            (1, 0): z,
        },
    )
    return FixtureProtocol("s=10 r=7", 2, 10, 7, 1.0, state, choi, 0.97422, 1e-3)


def map_6_4(v=2.0, a=1.0, b=_H2):
    ca, cb = sqrt(max(1 - a * a, 0.0)), sqrt(max(1 - b * b, 0.0))
    return ChoiMap.from_projectors(
        2,
        4,
        [
            {(0, 1): a * _H2, (0, 4): ca * _H2, (1, 0): -b * _H2, (1, 3): cb * _H2},
            {(0, 0): cb / sqrt(v), (0, 3): b / sqrt(v), (1, 2): sqrt(v - 1) / sqrt(v)},
            {(0, 2): sqrt(2 - v) / sqrt(3 - v), (1, 1): ca / sqrt(3 - v), (1, 4): -a / sqrt(3 - v)},
        ],
        weights=[2.0, v, 3 - v],
    )


# fidelity of the (6, 4) map with its optimal input state, obtained from the state program
F_6_4 = 0.869966751751


def fixture_6_4():
    """Approximate (6, 4) map; the input state is the state program's optimum for it."""
    choi = map_6_4()
    state, F = optimize_state_given_map(FixedMapProblem(choi, 1.0, 6))
    return FixtureProtocol("s=6 r=4", 2, 6, 4, 1.0, state, choi, F_6_4, 1e-6)


def fixture_qutrit_3_2():
    choi = ChoiMap.from_projectors(
        3,
        2,
        [
            {(0, (0, 0, 2)): _H2, (1, (1, 1, 0)): -_H2},
            {(0, (0, 2, 0)): _H2, (1, (1, 0, 1)): -_H2},
            {(0, (2, 0, 0)): _H2, (1, (0, 1, 1)): -_H2},
        ],
    )
    k = 1 / sqrt(6)
    state = SymmetricState.from_terms(
        3, 3, {(0, (0, 0, 3)): k, (0, (0, 3, 0)): k, (0, (3, 0, 0)): k, (1, (1, 1, 1)): -_H2}
    )
    return FixtureProtocol("qutrit s=3 r=2", 3, 3, 2, 1.0, state, choi, 1.0, 1e-9)


def real_root(coeffs, n):
    """n-th real root (ascending, one-indexed) of a polynomial given highest degree first."""
    roots = np.roots(coeffs)
    real = np.sort(roots[np.abs(roots.imag) < 1e-9].real)
    if n < 1 or n > real.size:
        raise ValueError(f"polynomial has {real.size} real roots, asked for root {n}")
    return float(real[n - 1])


def qutrit_5_3_fidelity():
    return (9 + real_root([1, -8, -23, 138], 3)) / 20


def fixture_qutrit_5_3():
    h = 0.5
    choi = ChoiMap.from_projectors(
        3,
        3,
        [
            {(0, (1, 0, 2)): _H2, (1, (0, 1, 2)): -_H2},
            {(0, (1, 2, 0)): _H2, (1, (0, 2, 1)): -_H2},
            {(0, (3, 0, 0)): _H2, (1, (1, 1, 1)): -_H2},
            {(0, (0, 0, 3)): h, (0, (0, 3, 0)): -h, (1, (2, 0, 1)): h, (1, (2, 1, 0)): h},
            {(0, (0, 0, 3)): h, (0, (0, 3, 0)): h, (1, (2, 0, 1)): -h, (1, (2, 1, 0)): h},
        ],
    )
    alpha = sqrt(real_root([1471632, -479136, 39917, -324], 3))
    beta = sqrt(real_root([91977, -85560, 25025, -2250], 1))
    gamma = sqrt(real_root([490544, -159712, 15543, -432], 1))
    delta = sqrt(real_root([30659, -23529, 5400, -324], 3))
    state = SymmetricState.from_terms(
        3,
        5,
        {
            (0, (1, 0, 4)): alpha,
            (0, (1, 4, 0)): -alpha,
            (0, (5, 0, 0)): -beta,
            (1, (0, 1, 4)): -gamma,
            (1, (0, 4, 1)): gamma,
            (1, (3, 1, 1)): delta,
        },
    )
    return FixtureProtocol("qutrit s=5 r=3", 3, 5, 3, 1.0, state, choi, qutrit_5_3_fidelity(), 1e-4)


def flip_variants(fx):
    """Equivalent protocols: qubit flip on Alice and Bob, and D^x_y -> D^x_{x-y} (d = 2)."""
    out = []
    flip = np.array([[0, 1], [1, 0]], dtype=float)
    if fx.d == 2:
        ps = np.eye(fx.s + 1)[::-1]
        pr = np.eye(fx.r + 1)[::-1]
        for a_flip, dicke_flip in product((False, True), repeat=2):
            if not (a_flip or dicke_flip):
                continue
            qa = flip if a_flip else np.eye(2)
            ks = np.kron(qa, ps if dicke_flip else np.eye(fx.s + 1))
            kr = np.kron(qa, pr if dicke_flip else np.eye(fx.r + 1))
            out.append(
                FixtureProtocol(
                    fx.name + " (variant)",
                    fx.d,
                    fx.s,
                    fx.r,
                    fx.p_dist,
                    SymmetricState(fx.d, fx.s, ks @ fx.state.coeffs @ ks.T),
                    ChoiMap(fx.d, fx.r, kr @ fx.map.coeffs @ kr.T),
                    fx.expected_fidelity,
                    fx.tolerance,
                )
            )
    return out


def fixtures(include_approximate=True):
    """Closed-form optimal protocols with their fidelities at p_dist = 1."""
    out = [high_loss_fixture(s, r) for s, r in [(2, 1), (3, 1), (3, 2), (4, 2), (5, 3), (6, 2), (7, 4), (9, 5)]]
    out += [single_erasure_fixture(r) for r in (3, 4, 5, 6)]
    out += [double_erasure_fixture(r) for r in (5, 6, 7)]
    out += [fixture_5_3(), fixture_8_5(), fixture_qutrit_3_2(), fixture_qutrit_5_3()]
    if include_approximate:
        out += [fixture_10_7(), fixture_6_4()]
    return out
