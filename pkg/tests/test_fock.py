import os
import sys

import numpy as np
import pytest

root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.insert(0, root)

from measknow.fock import (
    coherent_amplitudes,
    coherent_state,
    coherent_state_with_mean,
    fock_state,
    number_operator,
    thermal_state,
)
from measknow.operators import mean_stddev


def test_number_operator():
    assert np.allclose(number_operator(3), np.diag([0, 1, 2, 3]))
    with pytest.raises(ValueError):
        number_operator(-1)


def test_fock_state():
    state = fock_state(2, 5)
    assert state.dim == 6
    assert mean_stddev(number_operator(5), state) == pytest.approx((2.0, 0.0))
    with pytest.raises(ValueError):
        fock_state(6, 5)


def test_coherent_amplitudes_are_normalised():
    for alpha in (0.0, 0.5, 1.0 + 1.0j, 3.0):
        assert np.linalg.norm(coherent_amplitudes(alpha, 40)) == pytest.approx(1.0)
    assert np.allclose(coherent_amplitudes(0.0, 4), [1, 0, 0, 0, 0])


def test_coherent_state_statistics():
    # Poissonian: mean and variance both |α|².
    state = coherent_state(1.5 * np.exp(0.3j), 40)
    mean, stddev = mean_stddev(number_operator(40), state)
    assert mean == pytest.approx(2.25, abs=1e-9)
    assert stddev**2 == pytest.approx(2.25, abs=1e-9)

    mean, _ = mean_stddev(number_operator(30), coherent_state_with_mean(4.0, 30))
    assert mean == pytest.approx(4.0, abs=1e-6)
    with pytest.raises(ValueError):
        coherent_state_with_mean(-1.0, 10)


def test_coherent_amplitudes_large_cutoff_stay_finite():
    amps = coherent_amplitudes(2.0, 400)
    assert np.all(np.isfinite(amps))


def test_thermal_state():
    state = thermal_state(1.0, 60)
    mean, stddev = mean_stddev(number_operator(60), state)
    assert mean == pytest.approx(1.0, abs=1e-9)
    # Bose-Einstein variance n̄(n̄ + 1).
    assert stddev**2 == pytest.approx(2.0, abs=1e-9)
    assert np.allclose(thermal_state(0.0, 3).matrix, np.diag([1, 0, 0, 0]))
    with pytest.raises(ValueError):
        thermal_state(-0.5, 3)
