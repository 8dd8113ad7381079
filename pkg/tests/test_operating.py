import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lidonor.operating import (MAP_HBAR_OMEGA21, InfeasibleError, operating_point,
                               operating_temperature, quality_three_level, quality_two_level,
                               quality_two_level_closed, sweep, zero_temperature_quality)
from lidonor.units import HBAR, NM, MaterialParams, ValidationError

P = MaterialParams()
W21_MAP = MAP_HBAR_OMEGA21 / HBAR

Q2_100NM_02 = 415916.2418776715
Q3_50NM_0002_100MK = 57759.97593014024


def test_frozen_qualities(params):
    assert quality_two_level(100 * NM, 0.2, params) == pytest.approx(Q2_100NM_02, rel=1e-10)
    assert quality_three_level(50 * NM, 0.002, 0.1, params) == pytest.approx(Q3_50NM_0002_100MK, rel=1e-10)


@given(st.floats(20, 500), st.floats(0.01, 0.5))
def test_two_level_closed_form_agrees(r_nm, eps):
    assert quality_two_level_closed(r_nm * NM, eps, P) == pytest.approx(
        quality_two_level(r_nm * NM, eps, P), rel=1e-10)


@given(st.floats(15, 200), st.floats(0.01, 0.99))
@settings(max_examples=60)
def test_temperature_round_trip(r_nm, frac):
    r = r_nm * NM
    q = frac * zero_temperature_quality(r, W21_MAP, P)
    t = operating_temperature(q, r, 0.0, P, omega21=W21_MAP)
    assert quality_three_level(r, 0.0, t, P, omega21=W21_MAP) == pytest.approx(q, rel=1e-9)


def test_infeasible_target(params):
    q0 = zero_temperature_quality(50 * NM, W21_MAP, params)
    with pytest.raises(InfeasibleError):
        operating_temperature(1.01 * q0, 50 * NM, 0.0, params, omega21=W21_MAP)
    with pytest.raises(ValidationError):
        operating_temperature(-1, 50 * NM, 0.0, params, omega21=W21_MAP)


def test_alternative_inversion_differs(params):
    # the alternative closed expression is only defined for small targets
    r = 50 * NM
    q = 1.0
    t_alt = operating_temperature(q, r, 0.0, params, omega21=W21_MAP, alt_form=True)
    t = operating_temperature(q, r, 0.0, params, omega21=W21_MAP)
    assert t_alt > 0 and t > 0
    with pytest.raises(InfeasibleError):
        operating_temperature(1e4, r, 0.0, params, omega21=W21_MAP, alt_form=True)


def test_quality_falls_with_temperature(params):
    qs = [quality_three_level(50 * NM, 0.002, t, params) for t in (0.0, 0.01, 0.1, 1.0)]
    assert all(a > b for a, b in zip(qs, qs[1:]))
    with pytest.raises(ValidationError):
        quality_three_level(50 * NM, 0.002, -1.0, params)


def test_operating_point_record(params):
    op = operating_point(100 * NM, 0.2, 0.1, params)
    assert op.q2 == pytest.approx(Q2_100NM_02)
    assert math.isnan(operating_point(100 * NM, 0.0, 0.1, params).q2)


def test_temperature_map_table(params):
    t = sweep("fig3_temperature", params, r=[20 * NM, 50 * NM, 100 * NM], q=[1e3, 1e4, 1e5])
    assert t.columns == ("R_nm", "q", "T_star_mK")
    temps = t.column("T_star_mK").reshape(3, 3)
    finite = np.isfinite(temps)
    assert finite[0].all()
    assert not finite[2, 2]  # q = 1e5 is out of reach at 100 nm


def test_lifetime_table(params):
    t = sweep("fig1_lifetimes", params, eps=[0.1, 0.2])
    assert t.columns == ("eps", "tau10_s", "tau21_s")
    assert np.all(t.column("tau10_s") > t.column("tau21_s"))
    t2 = sweep("fig1_lifetimes", params, eps=[0.2], w21_override=1 / 3e-3)
    assert t2.column("tau21_s")[0] == pytest.approx(3e-3)


def test_coupling_table(params):
    t = sweep("coupling_vs_R", params, r=[50 * NM, 100 * NM], epsilon=0.002)
    j = t.column("J_rad_s")
    assert j[0] / j[1] == pytest.approx(8.0)


def test_sweep_errors(params):
    with pytest.raises(ValidationError):
        sweep("nope", params)
    with pytest.raises(ValidationError):
        sweep("fig1_lifetimes", params, eps=[])
    with pytest.raises(ValidationError):
        sweep("fig1_lifetimes", params, eps=[0.0])
    with pytest.raises(ValidationError):
        sweep("fig1_lifetimes", params, eps=[0.1], rates="guess")
