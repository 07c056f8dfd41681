from itertools import product

import numpy as np
import pytest

from losscodes.analysis import ChannelModel
from losscodes.baselines import (
    F_6_4,
    baseline_fidelity,
    bbpssw_choi,
    cnot_double_selection_choi,
    double_erasure_fixture,
    fixtures,
    five_qubit_code_entropy,
    five_qubit_configuration_results,
    five_qubit_logical,
    flip_variants,
    high_loss_fixture,
    max_success_probability,
    qutrit_5_3_fidelity,
    real_root,
    single_erasure_fixture,
)


@pytest.mark.parametrize("fx", fixtures(), ids=lambda f: f.name)
def test_fixture(fx):
    p, F = fx.evaluate()
    assert p == pytest.approx(fx.p_dist, abs=1e-9)
    assert F == pytest.approx(fx.expected_fidelity, abs=fx.tolerance)
    assert fx.state.is_valid() and fx.map.is_valid()
    for var in flip_variants(fx):
        assert var.evaluate()[1] == pytest.approx(F, abs=1e-12)


def test_fixture_families_validate():
    with pytest.raises(ValueError):
        high_loss_fixture(3, 3)
    with pytest.raises(ValueError):
        single_erasure_fixture(2)
    with pytest.raises(ValueError):
        double_erasure_fixture(4)


def test_qutrit_cubic_root():
    assert qutrit_5_3_fidelity() == pytest.approx(0.891769, abs=1e-6)
    assert real_root([1, -6, 11, -6], 1) == pytest.approx(1.0)
    assert real_root([1, -6, 11, -6], 3) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        real_root([1, 0, 1], 1)


def test_6_4_constant():
    assert fixtures()[-1].evaluate()[1] == pytest.approx(F_6_4, abs=1e-6)


def test_bbpssw_on_bell_pairs():
    # both halves arrive: the kept branch of Phi+ (x) Phi+ has fidelity 1
    choi = bbpssw_choi(0)
    assert choi.is_valid()
    assert max_success_probability(choi, 2) == pytest.approx(1.0, abs=1e-6)
    assert baseline_fidelity(choi, 2, 0.5) == pytest.approx(1.0, abs=1e-6)


def test_bbpssw_choi_form():
    w = np.zeros(6)
    w[0] = w[5] = 1.0  # |0, D0> + |1, D2>
    np.testing.assert_allclose(bbpssw_choi(0).coeffs, np.outer(w, w), atol=1e-14)
    assert bbpssw_choi(1).is_valid()


def test_cnot_double_selection_bound():
    for s in range(4, 8):
        for o in product((0, 1), repeat=2):
            assert max_success_probability(cnot_double_selection_choi(o), s) <= 2 / 3 + 1e-6
    assert all(cnot_double_selection_choi(o).is_valid() for o in product((0, 1), repeat=2))


def test_baseline_fidelity_infeasible_is_nan():
    assert np.isnan(baseline_fidelity(cnot_double_selection_choi((0, 0)), 5, 0.9))
    assert baseline_fidelity(bbpssw_choi(0), 3, 0.5) > 0.5


def test_five_qubit_code_logical_states():
    zero, one = five_qubit_logical()
    assert zero @ one == pytest.approx(0.0, abs=1e-12)
    assert zero @ zero == pytest.approx(1.0)


def test_five_qubit_code_recovers_two_erasures():
    res = five_qubit_configuration_results()
    for cfg, out in res.items():
        if len(cfg) >= 3:
            assert out.fidelity == pytest.approx(1.0, abs=1e-7)


def test_five_qubit_reduced_not_better():
    for L in (2.0, 8.0, 20.0):
        ch = ChannelModel(0.046, L)
        assert five_qubit_code_entropy(ch, "reduced") >= five_qubit_code_entropy(ch, "full") - 1e-7
    with pytest.raises(ValueError):
        five_qubit_code_entropy(ChannelModel(0.046, 1.0), "other")
