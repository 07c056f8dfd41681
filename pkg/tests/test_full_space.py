from itertools import combinations

import numpy as np
import pytest

from conftest import random_map, random_state
from losscodes.dicke import SymmetricState, evaluate, loss_tensor
from losscodes.full_space import (
    FullState,
    configurations,
    dicke_isometry,
    embed,
    embed_map,
    full_erasure_optimize,
    full_evaluate,
    trace_configuration,
)


def test_embed_dicke_state():
    st = SymmetricState.from_terms(2, 2, {(0, 1): 1.0})
    full = embed(st).matrix
    v = np.zeros(8)
    v[[1, 2]] = 1 / np.sqrt(2)
    np.testing.assert_allclose(full, np.outer(v, v), atol=1e-14)


def test_embed_isometry(rng):
    for d, s in [(2, 4), (3, 3)]:
        v = dicke_isometry(s, d)
        np.testing.assert_allclose(v.T @ v, np.eye(v.shape[1]), atol=1e-14)
        x, y = random_state(d, s, rng), random_state(d, s, rng)
        assert np.sum(embed(x).matrix * embed(y).matrix) == pytest.approx(np.sum(x.coeffs * y.coeffs))
        assert embed(x).trace == pytest.approx(1.0, abs=1e-14)


def test_embed_cap(rng):
    with pytest.raises(MemoryError):
        embed(random_state(2, 4, rng), cap=16)


def test_trace_configuration_identity_and_product(rng):
    st = embed(random_state(2, 3, rng))
    np.testing.assert_allclose(trace_configuration(st, (0, 1, 2)).matrix, st.matrix)
    # product input: |0> (x) |0>|1>|+>, keep slots 1 and 2
    plus = np.array([1, 1]) / np.sqrt(2)
    vec = np.kron(np.array([1, 0]), np.kron(np.array([1, 0]), np.kron(np.array([0, 1]), plus)))
    out = trace_configuration(FullState(2, 3, np.outer(vec, vec)), (1, 2)).matrix
    kept = np.kron(np.array([1, 0]), np.kron(np.array([0, 1]), plus))
    np.testing.assert_allclose(out, np.outer(kept, kept), atol=1e-14)


def test_trace_configuration_rejects_bad_cfg(rng):
    st = embed(random_state(2, 3, rng))
    with pytest.raises(ValueError):
        trace_configuration(st, (0, 3))
    with pytest.raises(ValueError):
        trace_configuration(st, (1, 1))


def test_trace_configuration_preserves_trace_and_psd(rng):
    st = embed(random_state(2, 4, rng))
    for cfg in configurations(4, 2):
        out = trace_configuration(st, cfg).matrix
        assert np.trace(out) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.eigvalsh(out)[0] > -1e-12


@pytest.mark.parametrize("s", [2, 3, 4])
def test_reduced_matches_full_everywhere(s, rng):
    for r in range(1, s):
        T = loss_tensor(2, s, r)
        for _ in range(5):
            st, ch = random_state(2, s, rng), random_map(2, r, rng)
            red = evaluate(st, ch, T)
            fs, fc = embed(st), embed_map(ch)
            for cfg in combinations(range(s), r):
                out = full_evaluate(fs, fc, cfg)
                assert out.probability == pytest.approx(red.probability, abs=1e-9)
                assert out.fidelity == pytest.approx(red.fidelity, abs=1e-9)


def test_full_erasure_small():
    res = full_erasure_optimize(2, 2, 1, 1.0, n_restarts=4, random_state=0)
    assert res.fidelity == pytest.approx(0.75, abs=1e-4)
    assert set(res.per_configuration) == {(0,), (1,)}


def test_full_erasure_single_loss_code():
    res = full_erasure_optimize(2, 4, 3, 1.0, n_restarts=8, random_state=1)
    assert res.fidelity >= 0.999


@pytest.mark.slow
def test_full_erasure_5_3():
    res = full_erasure_optimize(2, 5, 3, 1.0, n_restarts=8, random_state=0)
    assert res.fidelity >= 0.998


def test_full_erasure_limits():
    with pytest.raises(ValueError):
        full_erasure_optimize(3, 3, 2, 1.0)
    with pytest.raises(ValueError):
        full_erasure_optimize(2, 7, 3, 1.0)
