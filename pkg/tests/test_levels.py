import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lidonor.levels import (EPS_MAX, PARTNER, Parity, ParityError, epsilon_from_stress, manifold,
                            parity_of, singlet_coefficients, stress_from_epsilon)
from lidonor.units import HBAR, MEV, ValidationError


def test_singlet_coefficients():
    a, b = singlet_coefficients(0.0)
    assert a == pytest.approx(1 / math.sqrt(3))
    assert b == pytest.approx(0.5 / math.sqrt(3))
    grid = np.linspace(0, 1, 21)
    ab = np.array([singlet_coefficients(e) for e in grid])
    assert np.allclose(2 * ab[:, 0] ** 2 + 4 * ab[:, 1] ** 2, 1.0)
    assert np.all(np.diff(ab[:, 0] ** 2) > 0)
    assert np.all(np.diff(ab[:, 1] ** 2) < 0)


@given(st.floats(0.0, EPS_MAX - 1e-9))
def test_states_orthonormal_and_parity(eps):
    lv = manifold(eps, __import__("lidonor").MaterialParams())
    alphas = np.array([s.alpha for s in lv.states])
    assert np.allclose(alphas @ alphas.T, np.eye(5), atol=1e-12)
    assert lv.state("S0").parity is Parity.ODD
    assert lv.state("S1").parity is Parity.EVEN
    assert lv.state("S2").parity is Parity.EVEN
    assert lv.omega21 == pytest.approx(2 * lv.omega10)


def test_level_energies(params):
    lv = manifold(0.2, params)
    assert lv.first.energy == pytest.approx(0.2 * params.delta_c)
    assert lv.second.energy == pytest.approx(0.6 * params.delta_c)
    assert lv.omega10 == pytest.approx(0.2 * params.delta_c / HBAR)
    # two and three degenerate odd partners of S2 share its energy
    assert lv.state("T_odd_a").energy == lv.second.energy


@given(st.floats(0.0, 1e9))
def test_stress_epsilon_inverse(fz):
    from lidonor.units import MaterialParams

    p = MaterialParams()
    assert stress_from_epsilon(epsilon_from_stress(fz, p), p) == pytest.approx(fz, rel=1e-12, abs=1e-6)


def test_stress_scale(params):
    # a stress near 1.3e5 dyn/cm^2 gives hbar w21 of order 1e-3 meV
    eps = epsilon_from_stress(1.3e5, params)
    assert 2 * eps * params.delta_c / MEV == pytest.approx(1e-3, rel=0.5)


@pytest.mark.parametrize("eps", [-0.1, EPS_MAX, 5.0])
def test_epsilon_range(params, eps):
    with pytest.raises(ValidationError):
        manifold(eps, params)


def test_parity_classifier():
    even = np.array([1, 1, 0, 0, 0, 0.0])
    assert parity_of(even) is Parity.EVEN
    assert parity_of(even - even[PARTNER] + np.array([1, -1, 0, 0, 0, 0])) is Parity.ODD
    with pytest.raises(ParityError):
        parity_of([1, 0, 0, 0, 0, 0])


def test_unknown_label(params):
    with pytest.raises(KeyError):
        manifold(0.1, params).state("S9")
