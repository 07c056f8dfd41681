import numpy as np
import pytest

from conftest import random_map
from losscodes.baselines import fixture_5_3, fixture_10_7, high_loss_fixture, single_erasure_fixture
from losscodes.dicke import PHI_PLUS, ChoiMap, SymmetricState, dicke_dim, evaluate, kraus_apply, loss_tensor
from losscodes.subproblems import (
    FixedMapProblem,
    FixedStateProblem,
    SubproblemInfeasible,
    _map_from_params,
    _params_from_map,
    optimize_map_given_state,
    optimize_state_given_map,
    outer_map_search,
    outer_state_search,
    solve_map_program,
    state_gradient,
)


@pytest.mark.parametrize("s,r", [(2, 1), (3, 1), (5, 3), (7, 4)])
def test_state_program_high_loss_map(s, r):
    fx = high_loss_fixture(s, r)
    state, F = optimize_state_given_map(FixedMapProblem(fx.map, 1.0, s))
    assert F == pytest.approx(0.5 + r / (2 * s), abs=1e-6)
    assert state.is_valid(atol=1e-7)
    # the returned state reproduces F through the evaluator
    out = evaluate(state, fx.map, loss_tensor(2, s, r))
    assert out.probability == pytest.approx(1.0, abs=1e-6)
    assert out.fidelity == pytest.approx(F, abs=1e-5)


def test_state_program_identity():
    state, F = optimize_state_given_map(FixedMapProblem(ChoiMap.identity(), 1.0, 1))
    assert F == pytest.approx(1.0, abs=1e-7)
    np.testing.assert_allclose(state.coeffs, np.outer(PHI_PLUS, PHI_PLUS), atol=1e-5)


def test_state_program_infeasible():
    ch = ChoiMap(2, 1, 0.5 * ChoiMap.identity().coeffs)
    with pytest.raises(SubproblemInfeasible):
        optimize_state_given_map(FixedMapProblem(ch, 0.9, 2))


def test_map_program_fixtures():
    _, F = optimize_map_given_state(FixedStateProblem(fixture_5_3().state, 1.0, 3))
    assert F == pytest.approx(0.8, abs=1e-7)
    phi = SymmetricState(2, 1, np.outer(PHI_PLUS, PHI_PLUS))
    _, F = optimize_map_given_state(FixedStateProblem(phi, 1.0, 1))
    assert F == pytest.approx(1.0, abs=1e-7)
    _, F = optimize_map_given_state(FixedStateProblem(fixture_10_7().state, 1.0, 7))
    assert F == pytest.approx(0.97422, abs=1e-4)


def test_map_program_solution_valid(rng):
    st = SymmetricState.from_vector(2, 4, rng.standard_normal(10))
    for p in (0.3, 0.7, 1.0):
        choi, F = optimize_map_given_state(FixedStateProblem(st, p, 2))
        assert choi.is_valid(atol=1e-7)
        out = evaluate(st, choi, loss_tensor(2, 4, 2))
        assert out.probability == pytest.approx(p, abs=1e-6)
        assert out.fidelity == pytest.approx(F, abs=1e-5)


def test_lower_probability_never_hurts(rng):
    st = SymmetricState.from_vector(2, 5, rng.standard_normal(12))
    vals = [optimize_map_given_state(FixedStateProblem(st, p, 3))[1] for p in (0.2, 0.5, 0.8, 1.0)]
    assert all(a >= b - 1e-6 for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("d,s,r,p", [(2, 3, 2, 1.0), (2, 4, 2, 0.6), (3, 2, 1, 0.8)])
def test_envelope_gradient_matches_finite_differences(d, s, r, p, rng):
    T = loss_tensor(d, s, r)
    n_r = dicke_dim(r, d)
    psi = rng.standard_normal(2 * dicke_dim(s, d))

    def F(v):
        rho = np.outer(v, v) / (v @ v)
        return solve_map_program(kraus_apply(rho, T.kraus), n_r, p, 1e-10, 1e-10)

    res = F(psi)
    g = state_gradient(psi, T.kraus, res.matrix, p, res.mult)
    h = 1e-5
    fd = np.array([(F(psi + h * e).fidelity - F(psi - h * e).fidelity) / (2 * h) for e in np.eye(psi.size)])
    np.testing.assert_allclose(g, fd, atol=2e-4)


def test_map_parameterization(rng):
    n = 3
    for slack in (True, False):
        theta = rng.uniform(-1, 1, size=4 * n * n + (n * n if slack else 0))
        c = _map_from_params(theta, n)
        assert ChoiMap(2, 2, c).is_valid(atol=1e-9)
        if not slack:
            np.testing.assert_allclose(ChoiMap(2, 2, c).input_marginal(), np.eye(n), atol=1e-9)
    ch = random_map(2, 2, rng)
    np.testing.assert_allclose(_map_from_params(_params_from_map(ch, 3), 3), ch.coeffs, atol=1e-7)


def test_outer_state_search_erasure_code():
    res = outer_state_search(2, 4, 3, 1.0, random_state=0)
    assert res.fidelity >= 0.999
    p, F = res.reevaluate()
    assert p == pytest.approx(1.0, abs=1e-6)
    assert F == pytest.approx(res.fidelity, abs=1e-5)


def test_outer_state_search_5_3():
    best = max(outer_state_search(2, 5, 3, 1.0, random_state=k).fidelity for k in range(3))
    assert best == pytest.approx(0.8, abs=5e-3)


def test_outer_state_search_qutrit():
    assert outer_state_search(3, 3, 2, 1.0, random_state=0).fidelity >= 0.999


def test_outer_state_search_seeded_and_fd():
    fx = high_loss_fixture(3, 2)
    res = outer_state_search(2, 3, 2, 1.0, seed_state=fx.state, gradient="fd", maxiter=20)
    assert res.fidelity >= fx.expected_fidelity - 1e-6
    with pytest.raises(ValueError):
        outer_state_search(2, 3, 2, 1.0, seed_state=np.ones(3))


def test_outer_map_search():
    assert outer_map_search(2, 2, 1, 1.0, random_state=0).fidelity == pytest.approx(0.75, abs=1e-3)
    fx = single_erasure_fixture(4)
    assert outer_map_search(2, 5, 4, 1.0, seed_map=fx.map).fidelity >= 1.0 - 1e-6
    assert outer_map_search(2, 5, 4, 1.0, random_state=0).fidelity >= 0.999


def test_outer_map_search_probabilistic():
    res = outer_map_search(2, 3, 1, 0.5, random_state=0, maxiter=50)
    p, F = res.reevaluate()
    assert p == pytest.approx(0.5, abs=1e-5)
    assert res.fidelity >= 2 / 3 - 1e-6
