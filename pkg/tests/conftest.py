import numpy as np
import pytest

from losscodes._linalg import qubit_partial_trace
from losscodes.dicke import ChoiMap, SymmetricState, dicke_dim


def random_state(d, s, rng, pure=False):
    n = 2 * dicke_dim(s, d)
    if pure:
        return SymmetricState.from_vector(d, s, rng.standard_normal(n))
    a = rng.standard_normal((n, n))
    rho = a @ a.T
    return SymmetricState(d, s, rho / np.trace(rho))


def random_map(d, r, rng):
    """Random trace-nonincreasing map on the symmetric input space."""
    n = dicke_dim(r, d)
    b = rng.standard_normal((2 * n, 2 * n))
    c = b @ b.T
    lam = np.linalg.eigvalsh(qubit_partial_trace(c, n))[-1]
    return ChoiMap(d, r, c / lam * rng.uniform(0.3, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
