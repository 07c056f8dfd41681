import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from losscodes import analysis as an
from losscodes.baselines import fixture_5_3, fixture_qutrit_3_2
from losscodes.dicke import evaluate, loss_tensor
from losscodes.subproblems import ProtocolResult

PHI = np.outer([1, 0, 0, 1], [1, 0, 0, 1]) / 2


def test_transmission():
    assert an.transmission(0.046, 80) == pytest.approx(0.0252, abs=1e-4)
    assert an.transmission(an.ChannelModel(0.046, 60)) == pytest.approx(0.0633, abs=1e-4)
    assert an.transmission(0.046, 0) == 1.0
    with pytest.raises(ValueError):
        an.ChannelModel(-1.0, 1.0)


def test_db_conversion():
    assert an.db_to_alpha(0.2) == pytest.approx(0.046, abs=1e-4)
    assert an.parse_alpha("0.2dB") == pytest.approx(an.db_to_alpha(0.2))
    assert an.parse_alpha("0.05") == 0.05


def test_multiplexing():
    assert an.multiplex_success(28, 0.025223) >= 0.5
    assert an.multiplex_success(27, 0.025223) < 0.5
    assert an.multiplex_success(1, 0.3) == pytest.approx(0.3)
    assert an.min_multiplex(0.025223) == 28
    assert an.arrival_distribution(5, 3, 0.5) == pytest.approx(0.5)
    assert an.arrival_distribution(3, 0, 0.2) == 1.0


def test_key_rate():
    assert an.secret_key_rate(0, 0, 0.5) == pytest.approx(0.5)
    assert an.secret_key_rate(0.5, 0.5, 1.0) == 0.0
    assert an.secret_key_rate(0.05, 0.05, 1.0) == pytest.approx(0.4270, abs=1e-3)


@given(st.floats(0, 0.5), st.floats(0, 0.5), st.floats(0, 1))
def test_key_rate_bounds(ex, ez, p):
    k = an.secret_key_rate(ex, ez, p)
    assert 0 <= k <= p + 1e-15


def test_rpe():
    assert an.rpe_success(4, 12, 0.82) == pytest.approx(0.986761, abs=1e-6)
    assert an.rpe_success(7, 1, 0.6) == pytest.approx(0.6**7)
    assert an.rpe_success(1, 1, 0.37) == pytest.approx(0.37)
    scan = an.rpe_scan(0.82, 1e-3)
    assert (scan[1], scan[2], scan[12], scan[35]) == (35, 39, 48, 1)
    with pytest.raises(ValueError):
        an.rpe_success(0, 1, 0.5)


@given(st.integers(1, 40), st.integers(1, 40), st.floats(0, 1))
def test_rpe_range(m, n, p):
    assert -1e-12 <= an.rpe_success(m, n, p) <= 1 + 1e-12


def test_hashing_entropy():
    assert an.hashing_entropy(PHI, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert an.hashing_entropy(PHI, 0.0) == pytest.approx(2.0)
    vals = [an.hashing_entropy(PHI, p) for p in np.linspace(0, 1, 21)]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
    assert an.direct_entropy(an.ChannelModel(0.046, 6)) < 1 < an.direct_entropy(an.ChannelModel(0.046, 7))
    assert 6 < an.critical_distance(an.direct_entropy) < 7


def test_error_rates():
    assert an.error_rates(PHI) == pytest.approx((0.0, 0.0), abs=1e-12)
    ex, ez = an.error_rates(an.werner_state(0.9))
    assert ex == pytest.approx(2 * 0.1 / 3) and ez == pytest.approx(2 * 0.1 / 3)


def test_swap_perfect():
    res = an.optimal_swap(PHI)
    assert res.e_X < 1e-9 and res.e_Z < 1e-9
    for inst in res.instruments.values():
        assert inst.is_valid()


@pytest.mark.parametrize("F", [0.9, 0.75, 0.6])
def test_swap_against_bell_oracle(F):
    rho = an.werner_state(F)
    res = an.optimal_swap(rho)
    ox, oz = an.bell_projection_swap(rho)
    assert res.e_X <= ox + 1e-6 and res.e_Z <= oz + 1e-6


def test_swap_random_states_never_worse(rng):
    for _ in range(5):
        a = rng.standard_normal((4, 4))
        rho = a @ a.T
        rho /= np.trace(rho)
        ox, oz = an.bell_projection_swap(rho)
        for mode in ("separate", "minimax"):
            res = an.optimal_swap(rho, mode)
            assert res.key_error <= max(ox, oz) + 1e-6
        sep = an.optimal_swap(rho)
        assert sep.e_X <= ox + 1e-6 and sep.e_Z <= oz + 1e-6
    with pytest.raises(ValueError):
        an.optimal_swap(rho, "other")


def test_swap_qutrit_protocol():
    fx = fixture_qutrit_3_2()
    out = evaluate(fx.state, fx.map, loss_tensor(3, 3, 2)).normalized()
    res = an.optimal_swap(out)
    assert res.e_X < 1e-7 and res.e_Z < 1e-7


def test_inverse_yield_direct_and_perfect():
    chans = [an.ChannelModel(0.046, L) for L in (0.0, 5.0, 10.0)]
    rows = an.inverse_yield([], chans)
    for ch, row in zip(chans, rows):
        assert row.per_packet == pytest.approx(np.exp(0.046 * ch.L))
    from losscodes.baselines import single_erasure_fixture

    fx = single_erasure_fixture(3)
    res = ProtocolResult(2, 4, 3, 1.0, 1.0, fx.state, fx.map)
    assert an.inverse_yield([res], [an.ChannelModel(0.046, 0.0)], include_direct=False)[0].per_packet == pytest.approx(1.0, abs=1e-9)
    # P(at least 3 of 4 arrive) = 1/2
    from scipy.optimize import brentq

    pt = brentq(lambda p: an.arrival_distribution(4, 3, p) - 0.5, 0.01, 0.99)
    ch = an.ChannelModel(0.046, -np.log(pt) / 0.046)
    row = an.inverse_yield([res], [ch], include_direct=False)[0]
    assert row.per_packet == pytest.approx(2.0, abs=1e-6)
    assert row.per_photon == pytest.approx(8.0, abs=1e-5)
    with pytest.raises(ValueError):
        an.inverse_yield([], chans, include_direct=False)


def test_key_rate_table_and_best_by_total():
    fx = fixture_5_3()
    res = ProtocolResult(2, 5, 3, 1.0, 0.8, fx.state, fx.map)
    rows = an.key_rate_table([res], [an.ChannelModel(0.046, 0.0)])
    assert rows[0][1] == pytest.approx(1.0)  # direct transmission wins at L = 0
    table = an.best_fidelity_by_total([res], an.ChannelModel(0.046, 0.0))
    assert table[-1] == (1.0, 0.8)
    assert all(f == 0.8 for _, f in table)


def test_postprocess_keeps_sparse_input():
    fx = fixture_5_3()
    res = ProtocolResult(2, 5, 3, 1.0, 0.8, fx.state, fx.map)
    out = an.postprocess(res)
    assert an.count_nonzero(out) == 4
    assert abs(out.reevaluate()[1] - 0.8) < 1e-6


def test_postprocess_recovers_rotated_state():
    fx = fixture_5_3()
    res = ProtocolResult(2, 5, 3, 1.0, 0.8, fx.state, fx.map)
    rot = an.gauge_transform(res, 0.4, 1.1)
    assert an.count_nonzero(rot) > 4
    p, F = rot.reevaluate()
    assert F == pytest.approx(0.8, abs=1e-12) and p == pytest.approx(1.0, abs=1e-12)
    out = an.postprocess(rot)
    assert an.count_nonzero(out) <= 4
    assert out.reevaluate()[1] > 0.8 - 1e-6


def test_postprocess_rejects_other_types():
    with pytest.raises(TypeError):
        an.postprocess("not a result")
