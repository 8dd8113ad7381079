"""Stress-pulse primitives and schedule builders.

Qubit convention: basis order (|0>, |1>), S_z = diag(-1/2, +1/2). A
resonant ac stress pulse of carrier phase ``phi`` acts in the rotating
frame as hbar*Omega_x*(cos(phi) sigma_x + sin(phi) sigma_y), so a pulse
of length tau rotates the pseudo-spin by 2*Omega_x*tau.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm, hadamard

from .levels import EPS_MAX, LevelStructure, epsilon_from_stress, manifold, stress_from_epsilon
from .units import HBAR, NM, NS, MaterialParams, ValidationError, derive

KINDS = ("dc_stress", "ac_stress", "ramp_epsilon")
RESERVED_KINDS = ("e_field",)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.diag([-0.5, 0.5]).astype(complex)

XY8 = (0.0, 0.5 * math.pi, 0.0, 0.5 * math.pi, 0.5 * math.pi, 0.0, 0.5 * math.pi, 0.0)


class ScheduleError(ValueError):
    pass


class UnsupportedError(ValueError):
    pass


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Pulse:
    kind: str
    target: tuple[int, ...]
    t_start: float  # s
    duration: float  # s
    amplitude: float = 0.0  # dyn/cm^2 (dc: stress increment, ac: drive amplitude)
    carrier: float = 0.0  # rad/s
    phase: float = 0.0  # rad
    ramp_to: float | None = None
    profile: str = "linear"

    def __post_init__(self):
        target = self.target
        if isinstance(target, (int, np.integer)):
            target = (int(target),)
        object.__setattr__(self, "target", tuple(int(t) for t in target))
        if self.kind in RESERVED_KINDS:
            raise UnsupportedError(f"pulse kind {self.kind!r} is reserved but unsupported")
        if self.kind not in KINDS:
            raise ScheduleError(f"unknown pulse kind {self.kind!r}")
        if not self.duration > 0:
            raise ScheduleError("pulse duration must be positive")
        if self.t_start < 0:
            raise ScheduleError("pulse start must be non-negative")
        if not self.target or min(self.target) < 0:
            raise ScheduleError("pulse target must be non-empty donor indices")
        if self.kind == "ac_stress" and not self.carrier > 0:
            raise ScheduleError("ac pulse needs a positive carrier frequency")
        if self.kind == "ramp_epsilon":
            if self.ramp_to is None or not (0.0 <= self.ramp_to < EPS_MAX):
                raise ScheduleError(f"ramp_to must lie in [0, {EPS_MAX})")
            if self.profile not in ("linear", "cosine"):
                raise ScheduleError(f"unknown ramp profile {self.profile!r}")

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration


@dataclass(frozen=True)
class PulseSchedule:
    pulses: tuple[Pulse, ...] = ()
    total_time: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pulses = tuple(sorted(self.pulses, key=lambda p: (p.t_start, p.target, p.kind)))
        object.__setattr__(self, "pulses", pulses)
        end = max((p.t_end for p in pulses), default=0.0)
        if self.total_time < end * (1 - 1e-12):
            raise ScheduleError(f"total_time {self.total_time} shorter than last pulse end {end}")
        _check_overlaps(pulses)


def _check_overlaps(pulses):
    for a_idx, a in enumerate(pulses):
        for b_idx in range(a_idx + 1, len(pulses)):
            b = pulses[b_idx]
            if b.t_start >= a.t_end:
                break
            if a.kind == b.kind and set(a.target) & set(b.target):
                if b.t_start < a.t_end - 1e-15 * max(a.t_end, 1.0):
                    raise ScheduleError(
                        f"overlapping {a.kind} pulses on donor(s) {sorted(set(a.target) & set(b.target))}:"
                        f" pulse #{a_idx} [{a.t_start:.6g}, {a.t_end:.6g}] s and"
                        f" pulse #{b_idx} [{b.t_start:.6g}, {b.t_end:.6g}] s")


# --- single-qubit primitives --------------------------------------------------

def rabi_frequency_x(amplitude: float, omega10: float, params: MaterialParams) -> float:
    """Rotating-wave drive strength Omega_x (rad/s) of an ac <001> stress of ``amplitude``."""
    if not amplitude > 0:
        raise ValidationError("ac stress amplitude must be positive")
    kappa0 = derive(params).kappa0
    energy = (128.0 * amplitude * omega10 * params.s11 / (params.u_l * math.sqrt(6.0))
              * (params.xi_u + params.xi_d) * kappa0 * params.a_par**2)
    return energy / HBAR


def rotation(angle: float, phase: float = 0.0) -> np.ndarray:
    """Ideal qubit rotation by ``angle`` about (cos phase, sin phase, 0)."""
    n = math.cos(phase) * SX + math.sin(phase) * SY
    return expm(-0.5j * angle * n)


def phase_unitary(phi: float) -> np.ndarray:
    """exp(-i phi S_z): what a dc shift delta_omega held for tau does with phi = tau*delta_omega."""
    return expm(-1j * phi * SZ)


def phase_gate_pulse(delta_omega: float, tau_dc: float, target: int, params: MaterialParams,
                     epsilon0: float = 0.2, t_start: float = 0.0) -> Pulse:
    """dc stress pulse that shifts omega10 by ``delta_omega`` for ``tau_dc``."""
    if not tau_dc > 0:
        raise ValidationError("tau_dc must be positive")
    d_eps = HBAR * delta_omega / params.delta_c
    if not (0.0 <= epsilon0 + d_eps < EPS_MAX):
        raise ValidationError(f"shifted epsilon {epsilon0 + d_eps:.4g} outside [0, {EPS_MAX})")
    stress = math.copysign(stress_from_epsilon(abs(d_eps), params), d_eps)
    return Pulse("dc_stress", (target,), t_start, tau_dc, amplitude=stress)


def dc_epsilon_shift(pulse: Pulse, params: MaterialParams) -> float:
    return math.copysign(epsilon_from_stress(abs(pulse.amplitude), params), pulse.amplitude)


def x_rotation_pulse(angle: float, amplitude: float, level: LevelStructure, target: int,
                     params: MaterialParams, phase: float = 0.0, t_start: float = 0.0) -> Pulse:
    if not (0.0 < angle <= 4 * math.pi + 1e-12):
        raise ValidationError("rotation angle must lie in (0, 4 pi]")
    omega = rabi_frequency_x(amplitude, level.omega10, params)
    tau = angle / (2.0 * omega)
    if tau < 2 * math.pi / level.omega10:
        raise ValidationError(
            f"pulse of {tau:.3g} s is shorter than one carrier period; rotating-wave picture fails")
    return Pulse("ac_stress", (target,), t_start, tau, amplitude=amplitude, carrier=level.omega10,
                 phase=phase)


def amplitude_for_duration(angle: float, tau: float, omega10: float, params: MaterialParams) -> float:
    return angle / (2.0 * tau) / rabi_frequency_x(1.0, omega10, params)


def ideal_pulse_unitary(pulse: Pulse, params: MaterialParams, omega10: float) -> np.ndarray:
    if pulse.kind == "ac_stress":
        omega = rabi_frequency_x(pulse.amplitude, omega10, params)
        return rotation(2 * omega * pulse.duration, pulse.phase)
    if pulse.kind == "dc_stress":
        dw = dc_epsilon_shift(pulse, params) * params.delta_c / HBAR
        return phase_unitary(dw * pulse.duration)
    raise ValidationError("no single-qubit ideal unitary for ramps")


# --- refocusing ----------------------------------------------------------------

def cal_walsh(m: int) -> list[np.ndarray]:
    """Even (palindromic) Walsh functions on 2^m slots, in increasing sequency, constant excluded."""
    rows = hadamard(2**m)
    seq = [int(np.sum(r[1:] != r[:-1])) for r in rows]
    order = sorted(range(len(rows)), key=lambda i: seq[i])
    return [rows[i] for i in order if seq[i] > 0 and seq[i] % 2 == 0]


def refocusing_pattern(n: int, pair: tuple[int, int]) -> dict[int, np.ndarray]:
    """Sign pattern s_k(slot) per pulsed donor; the selected pair is never pulsed."""
    if n < 2:
        raise TopologyError("refocusing needs at least two donors")
    j, k = sorted(pair)
    if k != j + 1 or j < 0 or k >= n:
        raise TopologyError(f"pair {pair} is not an adjacent pair of a {n}-donor chain")
    others = [i for i in range(n) if i not in (j, k)]
    if not others:
        return {}
    m = 2
    while len(cal_walsh(m)) < len(others):
        m += 1
    funcs = cal_walsh(m)
    return {q: funcs[i] for i, q in enumerate(others)}


def refocusing_flip_times(n: int, pair, tau2: float, cycles: int = 4) -> dict[int, list[float]]:
    patterns = refocusing_pattern(n, pair)
    out = {}
    for q, s in patterns.items():
        slots = len(s)
        per = tau2 / cycles
        flips = [i for i in range(1, slots) if s[i] != s[i - 1]]
        out[q] = [c * per + per * i / slots for c in range(cycles) for i in flips]
    return out


def refocusing_sequence(n: int, pair: tuple[int, int], tau2: float, tau1: float,
                        params: MaterialParams | None = None, omega10: float | None = None,
                        cycles: int = 4, t_start: float = 0.0) -> PulseSchedule:
    """pi pulses (XY-8 phase cycling) on all donors except ``pair`` over a window ``tau2``.

    Each pulsed donor follows its own palindromic Walsh sign pattern, so in the
    instantaneous-pulse limit every Ising term except the selected pair averages
    to zero. Pulses are centred on the sign changes.
    """
    params = params or MaterialParams()
    if omega10 is None:
        omega10 = manifold(0.2, params).omega10
    if not (tau1 > 0 and tau2 > 0):
        raise ValidationError("tau1 and tau2 must be positive")
    flips = refocusing_flip_times(n, pair, tau2, cycles)
    pulses = []
    amp = amplitude_for_duration(math.pi, tau1, omega10, params)
    for q, times in flips.items():
        gaps = np.diff([0.0, *times, tau2])
        gaps[[0, -1]] *= 2  # edge slots only need room for half a pulse
        if np.min(gaps) < tau1 * (1 - 1e-9):
            raise ValidationError(f"tau1={tau1:.3g} s too long for the refocusing slots of donor {q}")
        for i, tc in enumerate(times):
            pulses.append(Pulse("ac_stress", (q,), t_start + tc - tau1 / 2, tau1, amplitude=amp,
                                carrier=omega10, phase=XY8[i % 8]))
    return PulseSchedule(tuple(pulses), t_start + tau2,
                         meta={"builder": "refocusing", "pair": list(pair), "tau1": tau1,
                               "tau2": tau2, "cycles": cycles})


# --- RET gate --------------------------------------------------------------------

def ramp_shape(s: float, profile: str) -> float:
    """Fraction of a ramp completed at normalised time ``s`` in [0, 1]."""
    return s if profile == "linear" else 0.5 * (1.0 - math.cos(math.pi * s))


def ret_gate_schedule(pair: tuple[int, int], angle: float, epsilon0: float, epsilon2: float,
                      ramp_time: float, params: MaterialParams, g21,
                      adiabatic_factor: float = 10.0, profile: str = "linear",
                      t_start: float = 0.0) -> PulseSchedule:
    """Ramp both donors to ``epsilon2``, dwell, ramp back.

    The gate realises exp(-i angle/2 (|12><21| + h.c.)) on the resonant pair;
    angle = pi is a full excitation swap, pi/2 an equal superposition.
    ``g21`` is either the constant at ``epsilon2`` (dwell = angle/|g21|) or a
    callable epsilon -> g21, in which case the angle picked up during the two
    ramps is subtracted from the dwell.
    """
    if not epsilon2 < epsilon0:
        raise ValidationError("epsilon2 must be below epsilon0")
    w21 = manifold(epsilon2, params).omega21
    if ramp_time * w21 < adiabatic_factor:
        raise ValidationError(
            f"ramp of {ramp_time:.3g} s not adiabatic: omega21*ramp = {ramp_time * w21:.3g}"
            f" < {adiabatic_factor}")
    if angle < 0:
        raise ValidationError("angle must be non-negative")
    ramp_angle = 0.0
    if callable(g21):
        g_of = g21
        g21 = g_of(epsilon2)
        s, wts = np.polynomial.legendre.leggauss(24)
        s = 0.5 * (s + 1.0)
        g_ramp = [abs(g_of(epsilon0 + (epsilon2 - epsilon0) * ramp_shape(x, profile))) for x in s]
        ramp_angle = 2.0 * ramp_time * 0.5 * float(np.dot(wts, g_ramp))
        if ramp_angle > angle:
            raise ValidationError(
                f"ramps alone accumulate {ramp_angle:.3g} rad, more than the requested {angle:.3g}")
    dwell = (angle - ramp_angle) / abs(g21) if angle > ramp_angle else 0.0
    tgt = tuple(pair)
    down = Pulse("ramp_epsilon", tgt, t_start, ramp_time, ramp_to=epsilon2, profile=profile)
    up = Pulse("ramp_epsilon", tgt, t_start + ramp_time + dwell, ramp_time, ramp_to=epsilon0,
               profile=profile)
    return PulseSchedule((down, up), t_start + 2 * ramp_time + dwell,
                         meta={"builder": "ret_gate", "dwell": dwell, "angle": angle,
                               "ramp_angle": ramp_angle})


# --- serialisation ---------------------------------------------------------------

def pulse_to_dict(p: Pulse) -> dict:
    d = {"kind": p.kind, "target": list(p.target), "t_start_ns": p.t_start / NS,
         "duration_ns": p.duration / NS}
    if p.kind in ("dc_stress", "ac_stress"):
        d["amplitude_dyn_cm2"] = p.amplitude
    if p.kind == "ac_stress":
        d["carrier_rad_per_ns"] = p.carrier * NS
        d["phase_rad"] = p.phase
    if p.kind == "ramp_epsilon":
        d["ramp_to"] = p.ramp_to
        d["profile"] = p.profile
    return d


_PULSE_KEYS = {"kind", "target", "t_start_ns", "duration_ns", "amplitude_dyn_cm2",
               "carrier_rad_per_ns", "phase_rad", "ramp_to", "profile"}


def pulse_from_dict(d: dict, index: int = 0) -> Pulse:
    if not isinstance(d, dict):
        raise ScheduleError(f"pulses[{index}]: expected an object")
    extra = set(d) - _PULSE_KEYS
    if extra:
        raise ScheduleError(f"pulses[{index}]: unknown field(s) {sorted(extra)}")
    for key in ("kind", "target", "t_start_ns", "duration_ns"):
        if key not in d:
            raise ScheduleError(f"pulses[{index}]: missing field {key!r}")
    try:
        return Pulse(
            kind=d["kind"],
            target=d["target"] if isinstance(d["target"], int) else tuple(d["target"]),
            t_start=float(d["t_start_ns"]) * NS,
            duration=float(d["duration_ns"]) * NS,
            amplitude=float(d.get("amplitude_dyn_cm2", 0.0)),
            carrier=float(d.get("carrier_rad_per_ns", 0.0)) / NS,
            phase=float(d.get("phase_rad", 0.0)),
            ramp_to=None if d.get("ramp_to") is None else float(d["ramp_to"]),
            profile=d.get("profile", "linear"),
        )
    except (ScheduleError, UnsupportedError) as exc:
        raise type(exc)(f"pulses[{index}]: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ScheduleError(f"pulses[{index}]: {exc}") from exc


@dataclass(frozen=True)
class RegisterSpec:
    n: int
    spacing_nm: float
    epsilon0: float
    mode: str = "two_level"
    temperature_mK: float = 0.0


def schedule_to_dict(register: RegisterSpec, schedule: PulseSchedule) -> dict:
    return {"register": asdict(register),
            "total_time_ns": schedule.total_time / NS,
            "pulses": [pulse_to_dict(p) for p in schedule.pulses]}


def schedule_from_dict(doc: dict) -> tuple[RegisterSpec, PulseSchedule]:
    if not isinstance(doc, dict):
        raise ScheduleError("schedule document must be a JSON object")
    extra = set(doc) - {"register", "pulses", "total_time_ns"}
    if extra:
        raise ScheduleError(f"unknown top-level field(s) {sorted(extra)}")
    reg = doc.get("register")
    if not isinstance(reg, dict):
        raise ScheduleError("missing 'register' object")
    try:
        register = RegisterSpec(int(reg["n"]), float(reg["spacing_nm"]), float(reg["epsilon0"]),
                                reg.get("mode", "two_level"), float(reg.get("temperature_mK", 0.0)))
    except KeyError as exc:
        raise ScheduleError(f"register: missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ScheduleError(f"register: {exc}") from exc
    raw = doc.get("pulses", [])
    if not isinstance(raw, list):
        raise ScheduleError("'pulses' must be a list")
    pulses = tuple(pulse_from_dict(d, i) for i, d in enumerate(raw))
    for i, p in enumerate(pulses):
        if max(p.target) >= register.n:
            raise ScheduleError(f"pulses[{i}]: target {list(p.target)} outside register of {register.n}")
    end = max((p.t_end for p in pulses), default=0.0)
    total = float(doc.get("total_time_ns", end / NS)) * NS
    return register, PulseSchedule(pulses, max(total, end))


def parse_schedule(path) -> tuple[RegisterSpec, PulseSchedule]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScheduleError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    except OSError as exc:
        raise ScheduleError(f"{path}: {exc}") from exc
    return schedule_from_dict(doc)


def register_positions(spec: RegisterSpec) -> list[np.ndarray]:
    return [np.array([i * spec.spacing_nm * NM, 0.0, 0.0]) for i in range(spec.n)]


def shift_schedule(schedule: PulseSchedule, dt: float) -> PulseSchedule:
    return PulseSchedule(tuple(Pulse(p.kind, p.target, p.t_start + dt, p.duration, p.amplitude,
                                     p.carrier, p.phase, p.ramp_to, p.profile)
                               for p in schedule.pulses), schedule.total_time + dt)


def concat(*schedules: PulseSchedule) -> PulseSchedule:
    out: list[Pulse] = []
    t = 0.0
    for s in schedules:
        out.extend(shift_schedule(s, t).pulses)
        t += s.total_time
    return PulseSchedule(tuple(out), t)


def serialize(register: RegisterSpec, schedule: PulseSchedule, **kw) -> str:
    return json.dumps(schedule_to_dict(register, schedule), sort_keys=True, **kw)


__all__: Sequence[str] = [
    "Pulse", "PulseSchedule", "RegisterSpec", "rabi_frequency_x", "phase_gate_pulse",
    "x_rotation_pulse", "refocusing_sequence", "ret_gate_schedule", "parse_schedule",
]
