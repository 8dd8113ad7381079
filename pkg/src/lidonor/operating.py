"""Gate quality factors, operating temperature and figure datasets."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .coupling import (CouplingQuad, GeometryError, gamma_21, in_plane, ising_coupling,
                       oracle_g10, oracle_g21, oracle_ising, ret_coupling_10, ret_coupling_21,
                       StaticLimitWarning)
from .levels import manifold
from .phonons import (Branch, LongWavelengthWarning, QuadSettings, TransitionSpec, bose,
                      decay_rate_10_oracle, decay_rate_21, decay_rate_closed_form_10,
                      decay_rate_oracle)
from .units import HBAR, K_B, MEV, MaterialParams, ValidationError, derive

MAP_HBAR_OMEGA21 = 0.001 * MEV  # level spacing held fixed in the temperature map


class InfeasibleError(ValueError):
    """Requested quality exceeds the zero-temperature maximum."""


@dataclass(frozen=True)
class OperatingPoint:
    epsilon: float
    r_spacing: float  # cm
    temperature: float  # K
    q2: float
    q3: float

    def __post_init__(self):
        for name in ("q2", "q3"):
            v = getattr(self, name)
            if not (v > 0 or math.isnan(v)):
                raise ValidationError(f"{name} must be positive")


def _distance(r) -> float:
    r = float(r)
    if not r > 0:
        raise GeometryError("separation must be positive")
    return r


def _w10(epsilon, params, source):
    if source == "oracle":
        return decay_rate_10_oracle(epsilon, params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LongWavelengthWarning)
        return decay_rate_closed_form_10(epsilon, params)


def quality_two_level(r, epsilon: float, params: MaterialParams, w10: float | None = None) -> float:
    """q = 1/(tau2 W10) with tau2 = pi/|J|: Ising gates per phonon decay."""
    R = _distance(r)
    if w10 is None:
        w10 = _w10(epsilon, params, "closed-form")
    tau2 = math.pi / abs(ising_coupling(R, params))
    return 1.0 / (tau2 * w10)


def quality_two_level_closed(r, epsilon: float, params: MaterialParams) -> float:
    """Same quantity written out in material constants (one fraction)."""
    R = _distance(r)
    level = manifold(epsilon, params)
    x = params.a_par * derive(params).kappa0
    c = abs(-1 + 5.0 / 3.0 * (params.u_t / params.u_l) ** 2)
    return (35 * (1 + x * x / 4) ** 6 * params.u_t**5 * c
            / (64 * math.pi * level.a_coef**2 * x * x * R**3 * level.omega10**5 * params.a_par**2))


def zero_temperature_quality(r, omega21: float, params: MaterialParams) -> float:
    x = params.u_t / (omega21 * _distance(r))
    return gamma_21(params) * x**3


def quality_three_level(r, epsilon: float, temperature: float, params: MaterialParams,
                        omega21: float | None = None) -> float:
    """q = gamma/(n21(T)+1) (u_t/(omega21 R))^3: RET swaps per thermally enhanced 2->1 decay."""
    if temperature < 0:
        raise ValidationError("temperature must be non-negative")
    if omega21 is None:
        omega21 = manifold(epsilon, params).omega21
    return zero_temperature_quality(r, omega21, params) / (bose(omega21, temperature) + 1.0)


def operating_temperature(q_target: float, r, epsilon: float, params: MaterialParams,
                          omega21: float | None = None, alt_form: bool = False) -> float:
    """Highest temperature (K) at which the three-level quality still reaches ``q_target``.

    The default inverts the Planck factor exactly. ``alt_form=True`` evaluates
    the alternative closed expression -hbar w/(3 k ln(1 - q w R/(3 gamma u_t)))
    for comparison; it does not round-trip through ``quality_three_level``.
    """
    if not q_target > 0:
        raise ValidationError("target quality must be positive")
    if omega21 is None:
        omega21 = manifold(epsilon, params).omega21
    R = _distance(r)
    gamma = gamma_21(params)
    if alt_form:
        arg = 1 - q_target / (3 * gamma) * omega21 * R / params.u_t
        if arg <= 0:
            raise InfeasibleError("alternative expression undefined for this target")
        return -HBAR * omega21 / (3 * K_B * math.log(arg))
    q0 = zero_temperature_quality(R, omega21, params)
    if q_target >= q0:
        raise InfeasibleError(f"q={q_target:.4g} exceeds the zero-temperature maximum {q0:.4g}")
    return HBAR * omega21 / (K_B * math.log(q0 / (q0 - q_target)))


def operating_point(r, epsilon: float, temperature: float, params: MaterialParams) -> OperatingPoint:
    q2 = quality_two_level(r, epsilon, params) if epsilon > 0 else float("nan")
    q3 = quality_three_level(r, epsilon, temperature, params) if epsilon > 0 else float("nan")
    return OperatingPoint(epsilon, float(r), temperature, q2, q3)


# --- sweeps -------------------------------------------------------------------

@dataclass(frozen=True)
class Table:
    kind: str
    columns: tuple
    rows: list

    def column(self, name):
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)


SWEEP_KINDS = ("fig1_lifetimes", "fig3_temperature", "coupling_vs_R", "rates_vs_omega")


def sweep(kind: str, params: MaterialParams, *, eps=None, r=None, q=None, omega=None,
          epsilon: float = 0.2, rates: str = "closed-form", w21_override: float | None = None,
          quad: QuadSettings = QuadSettings(), oracle_couplings: bool = False,
          coupling_quad: CouplingQuad = CouplingQuad(), alt_form: bool = False) -> Table:
    """Tabulate one of the standard datasets; rows follow the grid order given.

    fig1_lifetimes  eps grid -> eps, tau10_s, tau21_s
    fig3_temperature  r grid (cm) x q list -> R_nm, q, T_star_mK (hbar w21 fixed at 0.001 meV)
    coupling_vs_R  r grid at ``epsilon`` -> R_nm, g10_rad_s, g21_rad_s, J_rad_s
    rates_vs_omega  omega grid at fixed ``epsilon`` states -> omega_rad_s, W10_s, W21_s
    """
    if rates not in ("closed-form", "oracle"):
        raise ValidationError(f"unknown rate source {rates!r}")
    if kind == "fig1_lifetimes":
        _need(eps, "eps")
        rows = []
        for e in eps:
            _eps_ok(e)
            w10 = _w10(e, params, rates)
            w21 = w21_override if w21_override is not None else decay_rate_21(e, params, quad)
            rows.append((float(e), 1.0 / w10, 1.0 / w21))
        return Table(kind, ("eps", "tau10_s", "tau21_s"), rows)
    if kind == "fig3_temperature":
        _need(r, "R")
        _need(q, "q")
        w21 = MAP_HBAR_OMEGA21 / HBAR
        rows = []
        for R in r:
            for qq in q:
                try:
                    t = operating_temperature(qq, R, 0.0, params, omega21=w21, alt_form=alt_form)
                except InfeasibleError:
                    t = float("nan")
                rows.append((float(R) * 1e7, float(qq), t * 1e3))
        return Table(kind, ("R_nm", "q", "T_star_mK"), rows)
    if kind == "coupling_vs_R":
        _need(r, "R")
        _eps_ok(epsilon, allow_zero=True)
        w10 = _w10(epsilon, params, rates) if epsilon > 0 else 0.0
        w21 = (w21_override if w21_override is not None else decay_rate_21(epsilon, params, quad)
               ) if epsilon > 0 else 0.0
        cols = ["R_nm", "g10_rad_s", "g21_rad_s", "J_rad_s"]
        if oracle_couplings:
            cols += ["g10_oracle_rad_s", "g21_oracle_rad_s", "J_oracle_rad_s"]
        rows = []
        level = manifold(epsilon, params)
        for R in r:
            R = _distance(R)
            g10 = ret_coupling_10(R, epsilon, params, w10) if epsilon > 0 else 0.0
            g21 = ret_coupling_21(R, epsilon, params, w21) if epsilon > 0 else 0.0
            row = [R * 1e7, g10, g21, ising_coupling(R, params)]
            if oracle_couplings:
                geom = in_plane(R)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", StaticLimitWarning)
                    row += [oracle_g10(geom, level, params, coupling_quad).value,
                            oracle_g21(geom, level, params, coupling_quad).value,
                            oracle_ising(geom, level, params, coupling_quad)]
            rows.append(tuple(row))
        return Table(kind, tuple(cols), rows)
    if kind == "rates_vs_omega":
        _need(omega, "omega")
        _eps_ok(epsilon)
        level = manifold(epsilon, params)
        s0, s1, s2 = level.state("S0"), level.state("S1"), level.state("S2")
        rows = []
        for w in omega:
            w10 = decay_rate_oracle(TransitionSpec(s1, s0, float(w)), level, params, quad,
                                    (Branch.T1, Branch.T2)).total
            w21 = decay_rate_oracle(TransitionSpec(s2, s1, float(w)), level, params, quad).total
            rows.append((float(w), w10, w21))
        return Table(kind, ("omega_rad_s", "W10_s", "W21_s"), rows)
    raise ValidationError(f"unknown sweep kind {kind!r}; expected one of {SWEEP_KINDS}")


def _need(grid, name):
    if grid is None or len(grid) == 0:
        raise ValidationError(f"sweep needs a non-empty {name} grid")


def _eps_ok(e, allow_zero=False):
    lo_ok = e >= 0.0 if allow_zero else e > 0.0
    if not (lo_ok and e < 3.0):
        raise ValidationError(f"epsilon {e} outside {'[0' if allow_zero else '(0'}, 3)")
