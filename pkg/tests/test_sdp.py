import numpy as np
import pytest

from losscodes import sdp
from losscodes.baselines import high_loss_fixture
from losscodes.subproblems import FixedStateProblem, optimize_map_given_state


def test_trivial_min_trace():
    prob = sdp.SdpProblem()
    X = prob.add_psd(2)
    prob.add_eq(prob.entry(X, 0, 0), -1.0)
    prob.set_objective(prob.trace_row(X), "min")
    sol = prob.solve()
    assert sol.status == sdp.OPTIMAL
    assert sol.objective == pytest.approx(1.0, abs=1e-7)
    assert sol.primal_residual <= 1e-8


def test_infeasible_toy():
    prob = sdp.SdpProblem()
    X = prob.add_psd(3)
    prob.add_eq(prob.trace_row(X), 1.0)  # tr X = -1
    prob.set_objective(prob.trace_row(X))
    assert prob.solve().status == sdp.INFEASIBLE


def test_max_eigenvalue_program():
    m = np.array([[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 1.0]])
    prob = sdp.SdpProblem()
    X = prob.add_psd(3)
    prob.add_eq(prob.trace_row(X), -1.0)
    prob.set_objective(prob.inner_row(X, m), "max")
    sol = sdp.solve(prob)
    assert sol.objective == pytest.approx(np.linalg.eigvalsh(m)[-1], abs=1e-7)


def test_scalar_and_nonneg():
    prob = sdp.SdpProblem()
    t = prob.add_scalar()
    prob.add_nonneg(prob.scalar(t), -2.5)  # t >= 2.5
    prob.set_objective(prob.scalar(t), "min")
    assert prob.solve().objective == pytest.approx(2.5, abs=1e-7)


def test_psd_constraint():
    # [[1, t], [t, 1]] >= 0 -> max t = 1
    prob = sdp.SdpProblem()
    t = prob.add_scalar()
    A = np.zeros((3, 1))
    A[1, 0] = np.sqrt(2)
    prob.add_psd_constraint(A, np.array([1.0, 0.0, 1.0]), 2)
    prob.set_objective(prob.scalar(t), "max")
    assert prob.solve().objective == pytest.approx(1.0, abs=1e-6)


def test_bad_inputs():
    prob = sdp.SdpProblem()
    X = prob.add_psd(2)
    with pytest.raises(ValueError):
        prob.add_psd_constraint(prob.trace_row(X), 0.0, 2)
    with pytest.raises(ValueError):
        prob.set_objective(prob.trace_row(X), "maximize")
    with pytest.raises(ValueError):
        prob.add_eq(prob.trace_row(X), [1.0, 2.0])


def test_deterministic():
    def build():
        prob = sdp.SdpProblem()
        X = prob.add_psd(3)
        prob.add_eq(prob.trace_row(X), -1.0)
        prob.set_objective(prob.inner_row(X, np.diag([1.0, 2.0, 3.0]) + 0.1), "max")
        return prob.solve()

    a, b = build(), build()
    np.testing.assert_array_equal(a.x, b.x)


def test_map_program_high_loss_state():
    fx = high_loss_fixture(2, 1)
    _, F = optimize_map_given_state(FixedStateProblem(fx.state, 1.0, 1))
    assert F == pytest.approx(0.75, abs=1e-7)
