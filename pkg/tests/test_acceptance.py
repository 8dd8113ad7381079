"""Acceptance criteria 1-13, one test each, at the stated tolerances."""

import math
import subprocess
import sys

import numpy as np
import pytest

from lidonor.coupling import ising_coupling, ret_coupling_10, ret_coupling_21
from lidonor.dynamics import (build_register, evolve, propagator, steady_state_populations,
                              thermal_ratio, unitary_infidelity, RateModel, _basis, _sz)
from lidonor.levels import VALLEY_AXES, epsilon_from_stress, manifold
from lidonor.operating import (MAP_HBAR_OMEGA21, operating_temperature, quality_three_level,
                               sweep, zero_temperature_quality)
from lidonor.oracles import fit_exponent, verify_refocusing
from lidonor.phonons import (decay_rate_21, decay_rate_closed_form_10, form_factor, polarizations,
                             reduced_amplitude, suppression_factor)
from lidonor.pulses import PulseSchedule, rabi_frequency_x, refocusing_sequence, x_rotation_pulse
from lidonor.units import HBAR, MEV, NM, NS, MaterialParams

P = MaterialParams()


def within_factor(x, ref, k):
    return ref / k <= x <= ref * k


def test_c01_suppression_factor(criterion):
    s = suppression_factor(0.01, P)
    criterion(1, "envelope suppression ~1e-5", within_factor(s, 1e-5, 2), f"{s:.3e} vs 1e-5 (x2)")


def test_c02_lifetime_magnitude(criterion):
    tau = 1 / decay_rate_closed_form_10(0.2, P)
    criterion(2, "tau10(eps=0.2) in [0.1, 100] s", 0.1 <= tau <= 100, f"{tau:.3g} s")


def test_c03_lifetime_contrast(criterion):
    ratio = decay_rate_21(0.5, P) / decay_rate_closed_form_10(0.5, P)
    criterion(3, "tau10/tau21 at eps=0.5 >= 1e6", ratio >= 1e6,
              f"{ratio:.3g} (reference claim > 1e7)")


def test_c04_scaling_exponents(criterion, oracle_reports):
    w = np.geomspace(manifold(0.02, P).omega10, manifold(0.2, P).omega10, 5)
    t = sweep("rates_vs_omega", P, omega=w, epsilon=0.2)
    s10 = fit_exponent(w, t.column("W10_s"))
    w = np.geomspace(manifold(0.0002, P).omega21, manifold(0.002, P).omega21, 5)
    t = sweep("rates_vs_omega", P, omega=w, epsilon=0.002)
    s21 = fit_exponent(w, t.column("W21_s"))
    ex = {k.split("(")[0]: r.extra["r_exponent"] for k, r in oracle_reports.items()
          if k.startswith(("g10", "g21", "ising"))}
    ok = (abs(s10 - 5) <= 0.05 and abs(s21 - 3) <= 0.05 and abs(ex["g10"] + 5) <= 0.10
          and abs(ex["g21"] + 3) <= 0.10 and abs(ex["ising"] + 3) <= 0.10)
    criterion(4, "oracle scaling exponents", ok,
              f"W10~w^{s10:.3f} W21~w^{s21:.3f} g10~R^{ex['g10']:.3f} g21~R^{ex['g21']:.3f}"
              f" J~R^{ex['ising']:.3f}")


def test_c05_parity_selection(criterion):
    lv = manifold(0.2, P)
    a0, a1 = lv.state("S0").alpha, lv.state("S1").alpha
    rng = np.random.default_rng(2024)
    qhat = rng.normal(size=(1000, 3))
    qhat /= np.linalg.norm(qhat, axis=1)[:, None]
    q = rng.uniform(0.01, 3.0, 1000)[:, None] / P.a_par * qhat
    worst = 0.0
    for e in polarizations(qhat):
        amp = reduced_amplitude(a0, a1, q, e, P, intravalley=True, intervalley=False)
        scale = sum(abs(a0[j] * a1[j]) * np.abs(P.xi_u * (q @ VALLEY_AXES[j]) * (e @ VALLEY_AXES[j])
                                                 + P.xi_d * np.sum(q * e, -1))
                    * form_factor(q, VALLEY_AXES[j], P) for j in range(6))
        if np.any(np.abs(amp[scale == 0]) > 0):
            worst = math.inf
        live = scale > 0
        worst = max(worst, float(np.max(np.abs(amp[live]) / scale[live])))
    criterion(5, "intravalley 0<->1 amplitude vanishes", worst <= 1e-12,
              f"max relative {worst:.2e} over 3000 modes")


def test_c06_ret10_benchmark(criterion):
    g = ret_coupling_10(100 * NM, 0.2, P) / math.pi
    criterion(6, "g10/pi at 100 nm, eps=0.2", within_factor(g, 0.4, 3), f"{g:.3f} Hz vs 0.4 Hz (x3)")


def test_c07_rabi_benchmark(criterion):
    om = rabi_frequency_x(1e5, 2 * math.pi * 1e10, P)
    f = om / (2 * math.pi) / 1e6
    tau = math.pi / (2 * om) / NS
    ok = within_factor(f, 630, 2) and within_factor(tau, 0.4, 2)
    criterion(7, "Rabi frequency and pi-pulse length", ok,
              f"{f:.0f} MHz vs 630 MHz, tau_pi {tau:.3f} ns vs 0.4 ns (x2)")


def test_c08_three_level_benchmarks(criterion):
    eps_f = epsilon_from_stress(1.3e5, P)
    e21 = HBAR * manifold(eps_f, P).omega21 / MEV
    w21 = decay_rate_21(0.002, P)
    g21 = abs(ret_coupling_21(50 * NM, 0.002, P, w21)) / (2 * math.pi) / 1e6
    ratio = thermal_ratio(manifold(0.002, P).omega21, 0.1)
    q0 = zero_temperature_quality(50 * NM, manifold(0.002, P).omega21, P)
    ok = (within_factor(e21, 1e-3, 2) and within_factor(g21, 5.2, 5)
          and abs(ratio - 8) <= 0.15 * 8 and within_factor(q0, 1e5, 10))
    criterion(8, "three-level benchmarks", ok,
              f"hbar w21(F=1.3e5)={e21:.2e} meV, g21/2pi={g21:.2f} MHz, kT/hbar w21={ratio:.2f},"
              f" q0={q0:.2e}")


def test_c09_ising_benchmark(criterion):
    j = abs(ising_coupling(100 * NM, P)) / math.pi / 1e6
    criterion(9, "|J|/pi at 100 nm", within_factor(j, 10.0, 100),
              f"computed {j:.3f} MHz alongside reference 10 MHz")


def test_c10_oracle_agreement(criterion, oracle_reports):
    devs = {k: r.deviation for k, r in oracle_reports.items() if not k.startswith("refocus")}
    ok = all((d <= 0.15 if k.startswith("W10") else d <= 0.20) for k, d in devs.items())
    criterion(10, "closed forms vs oracles", ok,
              ", ".join(f"{k} {100 * d:.2f}%" for k, d in devs.items()))


def _ret_period():
    reg = build_register(2, 50 * NM, mode="three_level", epsilon=0.002, params=P,
                         dephasing=False, relaxation=False)
    g = abs(reg.g21(reg.pairs[0], 0.002, 0.002))
    period = 2 * math.pi / g
    dt = period / 400
    res = evolve(reg, PulseSchedule((), 3 * period), dt=dt, initial="12", store_every=1)
    t = np.array([x[0] for x in res.trajectory])
    p = np.array([x[1][7, 7].real for x in res.trajectory]) - 0.5
    up = np.nonzero((p[:-1] < 0) & (p[1:] >= 0))[0]
    crossings = t[up] - p[up] * (t[up + 1] - t[up]) / (p[up + 1] - p[up])
    return float(np.mean(np.diff(crossings))), period


def _refocus_slope():
    reg = build_register(3, 100 * NM, epsilon=0.2, params=P, dephasing=False, relaxation=False)
    pair = (0, 1)
    j = reg.pairs[0].j_ising
    tau2 = math.pi / abs(j)
    sz = _sz(2)[_basis(3, 2)]
    ideal = np.diag(np.exp(-0.5j * j * sz[:, 0] * sz[:, 1] * tau2))
    ratios = np.geomspace(0.0125, 0.125, 6)
    infid = [unitary_infidelity(propagator(reg, refocusing_sequence(3, pair, tau2, r * tau2, P)), ideal)
             for r in ratios]
    return fit_exponent(ratios, infid), infid


def test_c11_dynamics_properties(criterion):
    reg = build_register(3, 100 * NM, epsilon=0.5, temperature=1.0, params=P)
    lv = manifold(0.5, P)
    pi2 = x_rotation_pulse(math.pi / 2, 1e5, lv, 1, P)
    tr = evolve(reg, PulseSchedule((pi2,), 1e-3), initial="010").trace_deviation

    rates = RateModel(P, w21_override=300.0)
    one = build_register(1, mode="three_level", epsilon=0.5, temperature=2.0, params=P, rates=rates,
                         dephasing=False)
    pops = np.real(np.diag(evolve(one, PulseSchedule((), 0.4)).final_state))
    db = float(np.max(np.abs(pops - steady_state_populations(one)[0])))

    measured, expected = _ret_period()
    per = abs(measured / expected - 1)

    zz = max(verify_refocusing(n, pair, params=P).extra["residual_zz"]
             for n, pair in ((3, (0, 1)), (4, (1, 2))))
    slope, infid = _refocus_slope()

    ok = tr <= 1e-9 and db <= 1e-6 and per <= 0.01 and zz < 1e-9 and 4 <= slope <= 8
    criterion(11, "dynamics properties", ok,
              f"trace dev {tr:.1e}, detailed balance {db:.1e}, RET period error {per:.1e},"
              f" delta-pulse ZZ residual {zz:.1e}, infidelity ~ (tau1/tau2)^{slope:.2f}"
              f" ({infid[0]:.1e}..{infid[-1]:.1e})")


def test_c12_temperature_round_trip(criterion):
    w21 = MAP_HBAR_OMEGA21 / HBAR
    r_grid = np.arange(20, 101, 10) * NM
    q_grid = [1e3, 1e4, 1e5]
    worst = 0.0
    temps = np.full((len(r_grid), len(q_grid)), np.nan)
    for i, r in enumerate(r_grid):
        q0 = zero_temperature_quality(r, w21, P)
        for k, q in enumerate(q_grid):
            if q >= q0:
                continue
            t = operating_temperature(q, r, 0.0, P, omega21=w21)
            temps[i, k] = t
            worst = max(worst, abs(quality_three_level(r, 0.0, t, P, omega21=w21) / q - 1))
    mono_q = all(np.all(np.diff(row[np.isfinite(row)]) < 0) for row in temps)
    mono_r = all(np.all(np.diff(col[np.isfinite(col)]) < 0) for col in temps.T)
    n = int(np.isfinite(temps).sum())
    criterion(12, "operating temperature round trip", worst <= 1e-9 and mono_q and mono_r,
              f"max relative error {worst:.1e} over {n} feasible grid points, monotone in q and R")


@pytest.mark.slow
def test_c13_determinism(criterion, tmp_path):
    cmds = [["lifetimes", "--eps", "0.05:0.5:0.05"], ["coupling", "--R", "logN(20,400,5)"],
            ["operating-point"], ["constants", "--format", "json"]]
    same = True
    for argv in cmds:
        outs = [subprocess.run([sys.executable, "-m", "lidonor.cli", *argv], capture_output=True,
                               check=True).stdout for _ in range(2)]
        same &= outs[0] == outs[1] and len(outs[0]) > 0
    criterion(13, "repeated CLI runs byte-identical", same, f"{len(cmds)} commands run twice")
