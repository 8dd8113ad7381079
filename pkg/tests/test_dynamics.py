import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lidonor.dynamics import (MAX_N, NumericalError, RateModel, basis_state, build_register, evolve,
                              gate_fidelity, propagator, qubit_indices, restrict,
                              steady_state_populations, unitary_infidelity)
from lidonor.levels import manifold
from lidonor.oracles import exchange_transfer, rabi_population
from lidonor.pulses import (PulseSchedule, phase_gate_pulse, phase_unitary, rabi_frequency_x,
                            rotation, x_rotation_pulse, Pulse)
from lidonor.units import NM, NS, MaterialParams, ValidationError
from lidonor.coupling import GeometryError

P = MaterialParams()


def closed(n, **kw):
    kw.setdefault("epsilon", 0.2)
    return build_register(n, 100 * NM, params=P, dephasing=False, relaxation=False, **kw)


def test_register_validation():
    with pytest.raises(ValidationError):
        build_register(MAX_N["two_level"] + 1, 100 * NM)
    with pytest.raises(ValidationError):
        build_register(MAX_N["three_level"] + 1, 100 * NM, mode="three_level")
    with pytest.raises(ValidationError):
        build_register(2, 5 * NM)
    with pytest.raises(GeometryError):
        build_register(2, positions=[[0, 0, 0], [50e-7, 0, 20e-7]])
    with pytest.raises(ValidationError):
        build_register(2, 100 * NM, epsilon=3.2)
    with pytest.raises(ValidationError):
        build_register(2, 100 * NM, mode="four_level")


def test_max_range_drops_pairs():
    reg = build_register(3, 100 * NM, max_range=150 * NM)
    assert [(p.i, p.j) for p in reg.pairs] == [(0, 1), (1, 2)]


@pytest.mark.parametrize("mode,n", [("two_level", 3), ("three_level", 2)])
def test_static_hamiltonian_hermitian(mode, n):
    reg = build_register(n, 60 * NM, mode=mode, epsilon=0.01)
    h = reg.hamiltonian()
    assert np.allclose(h, h.conj().T)


def test_basis_state_labels():
    reg = closed(2)
    rho = basis_state(reg, "01")
    assert rho[1, 1] == 1.0
    with pytest.raises(ValidationError):
        basis_state(reg, "2")
    assert list(qubit_indices(build_register(2, 60 * NM, mode="three_level"))) == [0, 1, 3, 4]


def test_pi_pulse_fidelity():
    reg = build_register(1, params=P, epsilon=0.2)
    lv = manifold(0.2, P)
    p = x_rotation_pulse(math.pi, 1e5, lv, 0, P)
    res = evolve(reg, PulseSchedule((p,), p.duration), process=True, ideal=rotation(math.pi))
    f = gate_fidelity(res, rotation(math.pi))
    assert 1 - f < 1e-9
    assert res.fidelity_report["average_gate_fidelity"] == pytest.approx(f)
    assert np.real(res.final_state[1, 1]) == pytest.approx(1.0, abs=1e-9)


@given(st.floats(-0.3, 0.3), st.floats(0.2, 3.0))
@settings(max_examples=12, deadline=None)
def test_detuned_rabi_matches_analytic(rel_detuning, angle):
    reg = closed(1)
    lv = manifold(0.2, P)
    omega = rabi_frequency_x(1e5, lv.omega10, P)
    delta = rel_detuning * omega
    tau = angle / (2 * omega)
    p = Pulse("ac_stress", (0,), 0.0, tau, amplitude=1e5, carrier=lv.omega10 + delta)
    res = evolve(reg, PulseSchedule((p,), tau), steps_per_period=240)
    assert np.real(res.final_state[1, 1]) == pytest.approx(rabi_population(omega, delta, tau), abs=1e-9)


def test_magnus_step_fourth_order():
    reg = closed(1)
    lv = manifold(0.2, P)
    omega = rabi_frequency_x(1e5, lv.omega10, P)
    tau = 1.3 / omega
    p = Pulse("ac_stress", (0,), 0.0, tau, amplitude=1e5, carrier=lv.omega10 + 0.4 * omega)
    exact = rabi_population(omega, 0.4 * omega, tau)
    err = [abs(evolve(reg, PulseSchedule((p,), tau), dt=tau / m).final_state[1, 1].real - exact)
           for m in (8, 16)]
    assert err[0] / err[1] > 12


def test_phase_gate_propagator():
    reg = closed(1)
    p = phase_gate_pulse(3e9, 1 * NS, 0, P)
    u = propagator(reg, PulseSchedule((p,), 1 * NS))
    assert unitary_infidelity(u, phase_unitary(3.0)) < 1e-20


def test_detuned_exchange_matches_analytic():
    reg = build_register(2, 50 * NM, mode="three_level", epsilon=[0.002, 0.0021], params=P,
                         dephasing=False, relaxation=False)
    pc = reg.pairs[0]
    g = reg.g21(pc, 0.002, 0.0021)
    detuning = 2 * P.delta_c * 0.0001 / 1.054571817e-27
    for t in (20 * NS, 73 * NS, 150 * NS):
        res = evolve(reg, PulseSchedule((), t), initial="12")
        got = np.real(res.final_state[7, 7])  # |21>
        assert got == pytest.approx(exchange_transfer(g, detuning, t), abs=1e-6)


def test_lab_frame_populations_agree():
    reg = closed(2)
    lv = manifold(0.2, P)
    p = x_rotation_pulse(math.pi / 2, 1e5, lv, 0, P)
    s = PulseSchedule((p,), 2 * p.duration)
    a = evolve(reg, s, frame="rotating").final_state
    b = evolve(reg, s, frame="lab").final_state
    assert np.allclose(np.diag(a), np.diag(b), atol=1e-12)
    assert abs(a[0, 2]) == pytest.approx(abs(b[0, 2]), abs=1e-12)


def test_counter_rotating_terms_small():
    reg = closed(1)
    lv = manifold(0.2, P)
    p = x_rotation_pulse(math.pi, 1e5, lv, 0, P)
    s = PulseSchedule((p,), p.duration)
    rwa = evolve(reg, s).final_state[1, 1].real
    full = evolve(reg, s, rwa=False).final_state[1, 1].real
    assert abs(rwa - full) < 1e-2


def test_trace_and_positivity_with_dissipation():
    reg = build_register(3, 100 * NM, epsilon=0.5, temperature=1.0, params=P)
    lv = manifold(0.5, P)
    p = x_rotation_pulse(math.pi / 2, 1e5, lv, 1, P)
    res = evolve(reg, PulseSchedule((p,), 1e-3), initial="010")
    assert res.trace_deviation < 1e-9
    assert res.min_eigenvalue > -1e-9
    assert res.hermiticity_deviation <= 1e-12


def test_user_dt_validated():
    reg = closed(1)
    lv = manifold(0.2, P)
    p = x_rotation_pulse(math.pi, 1e5, lv, 0, P)
    with pytest.raises(ValidationError):
        evolve(reg, PulseSchedule((p,), p.duration), dt=p.duration / 2, rwa=False)


def test_invariant_violation_raises():
    reg = closed(1)
    bad = np.diag([1.2, -0.2]).astype(complex)
    with pytest.raises(NumericalError):
        evolve(reg, PulseSchedule((), 1 * NS), initial=bad)


def test_steady_state_three_level_detailed_balance():
    rates = RateModel(P, w21_override=300.0)
    reg = build_register(1, mode="three_level", epsilon=0.5, temperature=2.0, params=P, rates=rates,
                         dephasing=False)
    res = evolve(reg, PulseSchedule((), 0.4))
    want = steady_state_populations(reg)[0]
    assert np.allclose(np.real(np.diag(res.final_state)), want, atol=1e-6)


def test_restrict_and_infidelity():
    reg = build_register(2, 60 * NM, mode="three_level")
    u = np.eye(9)
    assert restrict(u, reg).shape == (4, 4)
    assert unitary_infidelity(np.eye(2), np.eye(2)) == 0.0
    # global phases do not count
    assert unitary_infidelity(np.exp(0.3j) * rotation(1.0), rotation(1.0)) < 1e-30
    assert unitary_infidelity(rotation(1e-9), np.eye(2)) == pytest.approx(2 / 3 * (0.5e-9) ** 2, rel=1e-6)


def test_result_json():
    reg = closed(1)
    res = evolve(reg, PulseSchedule((), 1 * NS))
    doc = res.to_json_dict()
    assert doc["populations"] == [1.0, 0.0]
    assert doc["final_state"][0][0] == [1.0, 0.0]
