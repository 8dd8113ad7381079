"""Dense Lindblad simulation of small donor registers.

The register Hamiltonian (in units of hbar, baseline rotating frame) is

    H = sum_j H_j(t) + (1/2) sum_{i<j} J_ij S_iz S_jz + (1/2) sum_{i<j} (g_ij S_i^+ S_j^- + h.c.)

with S_z|1> = +|1>/2 and |0> the pseudo-spin down state. Stress pulses and
ramps enter as diagonal level shifts relative to each donor's baseline
level energies; ac pulses enter in the rotating-wave form unless the lab
option keeps the counter-rotating half. Phonon relaxation, thermal
excitation and dephasing are Lindblad channels whose rates follow the
instantaneous stress.
"""

from __future__ import annotations

import functools
import json
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .coupling import GeometryError, ising_coupling, ret_coupling_10, ret_coupling_21
from .levels import EPS_MAX, level_energy_factors
from .phonons import (LongWavelengthWarning, bose, decay_rate_10_oracle,
                      decay_rate_closed_form_10, dephasing_rate, w21_table)
from .pulses import PulseSchedule, ramp_shape, dc_epsilon_shift, rabi_frequency_x
from .units import HBAR, K_B, NM, MaterialParams, ValidationError

MAX_N = {"two_level": 8, "three_level": 5}
MIN_SPACING = 10 * NM
SECULAR_RATIO = 1e4


class NumericalError(RuntimeError):
    """Evolution left the physical state space beyond tolerance."""


# --- rates -----------------------------------------------------------------------

class RateModel:
    """Phonon rates as functions of epsilon (1/s), cached.

    ``source`` selects the closed-form 1->0 rate or the golden-rule oracle;
    the 2->1 rate always comes from the oracle table unless ``w21_override``
    fixes it. Below the table range W21 follows its omega^3 law.
    """

    def __init__(self, params: MaterialParams, source: str = "closed-form",
                 w21_override: float | None = None):
        if source not in ("closed-form", "oracle"):
            raise ValidationError(f"unknown rate source {source!r}")
        self.params = params
        self.source = source
        self.w21_override = w21_override
        self._w10 = functools.lru_cache(maxsize=4096)(self._w10_raw)
        self._w21 = functools.lru_cache(maxsize=4096)(self._w21_raw)

    def _w10_raw(self, eps):
        if eps <= 0:
            return 0.0
        if self.source == "oracle":
            return decay_rate_10_oracle(eps, self.params)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LongWavelengthWarning)
            return decay_rate_closed_form_10(eps, self.params)

    def _w21_raw(self, eps):
        if self.w21_override is not None:
            return float(self.w21_override)
        if eps <= 0:
            return 0.0
        table = w21_table(self.params)
        lo = table.eps[0]
        if eps < lo:
            return table(lo) * (eps / lo) ** 3
        return table(min(eps, table.eps[-1]))

    def w10(self, eps: float) -> float:
        return self._w10(float(eps))

    def w21(self, eps: float) -> float:
        return self._w21(float(eps))


# --- register --------------------------------------------------------------------

@dataclass(frozen=True)
class PairCoupling:
    i: int
    j: int
    distance: float
    j_ising: float  # rad/s


@dataclass(frozen=True)
class Register:
    n: int
    positions: tuple
    mode: str
    baseline_epsilon: tuple
    temperature: float  # K
    params: MaterialParams
    pairs: tuple  # PairCoupling
    rates: RateModel = field(compare=False, repr=False)
    include_dephasing: bool = True
    include_relaxation: bool = True

    @property
    def d(self) -> int:
        return 2 if self.mode == "two_level" else 3

    @property
    def dim(self) -> int:
        return self.d**self.n

    def g10(self, pair: PairCoupling, eps_i: float, eps_j: float) -> float:
        eps = 0.5 * (eps_i + eps_j)
        if eps <= 0:
            return 0.0
        return ret_coupling_10(pair.distance, eps, self.params, w10=self.rates.w10(eps))

    def g21(self, pair: PairCoupling, eps_i: float, eps_j: float) -> float:
        eps = 0.5 * (eps_i + eps_j)
        if eps <= 0 or self.mode != "three_level":
            return 0.0
        return ret_coupling_21(pair.distance, eps, self.params, w21=self.rates.w21(eps))

    def couplings(self):
        """(i, j, J, g10, g21) at the baseline stress, rad/s."""
        out = []
        for p in self.pairs:
            ei, ej = self.baseline_epsilon[p.i], self.baseline_epsilon[p.j]
            out.append((p.i, p.j, p.j_ising, self.g10(p, ei, ej), self.g21(p, ei, ej)))
        return out

    def hamiltonian(self) -> np.ndarray:
        """Undriven Hamiltonian / hbar in the baseline rotating frame (rad/s)."""
        basis = _basis(self.n, self.d)
        h = np.diag(_ising_energies(self, basis)).astype(complex)
        for i, j, _, g10, g21 in self.couplings():
            for lower, g in ((0, g10), (1, g21)):
                if g and lower < self.d - 1:
                    rows, cols = _flipflop(basis, self.d, i, j, lower)
                    h[rows, cols] += 0.5 * g
                    h[cols, rows] += 0.5 * g
        return h


def build_register(n: int, spacing: float | None = None, *, positions=None, mode: str = "two_level",
                   epsilon=0.2, temperature: float = 0.0, params: MaterialParams | None = None,
                   rates: RateModel | None = None, max_range: float | None = None,
                   dephasing: bool = True, relaxation: bool = True) -> Register:
    """Register of ``n`` donors on a chain along x (or at explicit ``positions``, cm).

    Pairs farther apart than ``max_range`` (cm) are left uncoupled.
    """
    params = params or MaterialParams()
    if mode not in MAX_N:
        raise ValidationError(f"unknown mode {mode!r}")
    if not (1 <= n <= MAX_N[mode]):
        raise ValidationError(f"{mode} registers hold 1..{MAX_N[mode]} donors, got {n}")
    if positions is None:
        if n > 1 and (spacing is None or not spacing > 0):
            raise ValidationError("spacing must be positive")
        positions = [np.array([k * (spacing or 0.0), 0.0, 0.0]) for k in range(n)]
    positions = tuple(np.asarray(p, dtype=float) for p in positions)
    if len(positions) != n:
        raise ValidationError("need one position per donor")
    eps = np.broadcast_to(np.asarray(epsilon, dtype=float), (n,))
    if np.any(eps < 0) or np.any(eps >= EPS_MAX):
        raise ValidationError(f"baseline epsilon must lie in [0, {EPS_MAX})")
    if temperature < 0:
        raise ValidationError("temperature must be non-negative")
    pairs = []
    for i, j in combinations(range(n), 2):
        r = positions[j] - positions[i]
        dist = float(np.linalg.norm(r))
        if dist <= MIN_SPACING:
            raise ValidationError(f"donors {i},{j} closer than 10 nm")
        if abs(r[2]) > 1e-12 * dist:
            raise GeometryError("coupling laws need all donors in a plane normal to <001>")
        if max_range is not None and dist > max_range:
            continue
        pairs.append(PairCoupling(i, j, dist, ising_coupling(dist, params)))
    return Register(n, positions, mode, tuple(float(e) for e in eps), float(temperature), params,
                    tuple(pairs), rates or RateModel(params), dephasing, relaxation)


# --- basis helpers ------------------------------------------------------------------

@functools.lru_cache(maxsize=32)
def _basis(n: int, d: int) -> np.ndarray:
    """(D, n) level index of each donor; donor 0 is the most significant digit."""
    b = np.array(np.unravel_index(np.arange(d**n), (d,) * n)).T
    b.setflags(write=False)
    return b


def _index(digits, d):
    return int(np.ravel_multi_index(tuple(digits), (d,) * len(digits)))


def _flip(basis, d, site, lower):
    """(rows, cols): states with ``site`` at lower+1 and the same states with it at ``lower``."""
    upper = basis[:, site] == lower + 1
    src = np.nonzero(upper)[0]
    dst = src - d ** (basis.shape[1] - 1 - site)
    return src, dst


def _flipflop(basis, d, i, j, lower):
    """Pairs (a, b) with a = (i up, j down), b = (i down, j up) for the lower->lower+1 transition."""
    n = basis.shape[1]
    sel = (basis[:, i] == lower + 1) & (basis[:, j] == lower)
    a = np.nonzero(sel)[0]
    b = a - d ** (n - 1 - i) + d ** (n - 1 - j)
    return a, b


def _sz(d):
    return np.array([-0.5, 0.5]) if d == 2 else np.array([-0.5, 0.5, 0.0])


def _ising_energies(reg: Register, basis) -> np.ndarray:
    sz = _sz(reg.d)[basis]
    e = np.zeros(len(basis))
    for p in reg.pairs:
        e += 0.5 * p.j_ising * sz[:, p.i] * sz[:, p.j]
    return e


def basis_state(reg: Register, label) -> np.ndarray:
    """Density matrix of a product basis state, e.g. "01" or [0, 1]."""
    digits = [int(c) for c in str(label).replace(",", "")] if isinstance(label, str) else list(label)
    if len(digits) != reg.n or any(not (0 <= x < reg.d) for x in digits):
        raise ValidationError(f"state label {label!r} does not fit a {reg.mode} register of {reg.n}")
    psi = np.zeros(reg.dim, dtype=complex)
    psi[_index(digits, reg.d)] = 1.0
    return np.outer(psi, psi.conj())


def qubit_indices(reg: Register) -> np.ndarray:
    basis = _basis(reg.n, reg.d)
    return np.nonzero(np.all(basis < 2, axis=1))[0]


# --- stress tracks ------------------------------------------------------------------

class EpsilonTrack:
    """epsilon(t) of one donor under ramps and dc pulses."""

    def __init__(self, eps0: float, pulses, params: MaterialParams):
        self.eps0 = eps0
        self.pieces = []  # (t0, t1, e_start, e_end, profile)
        level = eps0
        for p in sorted((p for p in pulses if p.kind == "ramp_epsilon"), key=lambda p: p.t_start):
            self.pieces.append((p.t_start, p.t_end, level, p.ramp_to, p.profile))
            level = p.ramp_to
        self.dc = [(p.t_start, p.t_end, dc_epsilon_shift(p, params))
                   for p in pulses if p.kind == "dc_stress"]

    def value(self, t: float) -> float:
        level = self.eps0
        for t0, t1, es, ee, prof in self.pieces:
            if t < t0:
                break
            if t >= t1:
                level = ee
                continue
            s = (t - t0) / (t1 - t0)
            level = es + (ee - es) * ramp_shape(s, prof)
            break
        for t0, t1, de in self.dc:
            if t0 <= t < t1:
                level += de
        if not (0.0 <= level < EPS_MAX):
            raise ValidationError(f"schedule drives epsilon to {level:.4g}, outside [0, {EPS_MAX})")
        return level


# --- evolution --------------------------------------------------------------------

@dataclass
class EvolutionResult:
    final_state: np.ndarray
    times: np.ndarray
    trajectory: list | None
    frame: str
    leakage: float | None
    trace_deviation: float
    hermiticity_deviation: float
    min_eigenvalue: float
    steps: int
    channel: np.ndarray | None = None  # (dq, dq, D, D): image of |i><j| on the qubit subspace
    qubit_index: np.ndarray | None = None
    fidelity_report: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        def pairs(m):
            return [[[float(z.real), float(z.imag)] for z in row] for row in m]

        return {
            "frame": self.frame,
            "total_time_ns": float(self.times[-1] * 1e9),
            "steps": self.steps,
            "trace_deviation": self.trace_deviation,
            "hermiticity_deviation": self.hermiticity_deviation,
            "min_eigenvalue": self.min_eigenvalue,
            "leakage": self.leakage,
            "populations": [float(x) for x in np.real(np.diag(self.final_state))],
            "final_state": pairs(self.final_state),
            "fidelity": self.fidelity_report,
        }


@dataclass
class _Term:
    rows: np.ndarray
    cols: np.ndarray
    amp: object  # callable(eps vector) -> rad/s
    phase0: float
    nu: float  # explicit oscillation of the element in the rotating frame, rad/s


class _Engine:
    """Hamiltonian and dissipators of a register in the baseline rotating frame."""

    def __init__(self, reg: Register, schedule: PulseSchedule, rwa: bool):
        self.reg = reg
        self.rwa = rwa
        n, d = reg.n, reg.d
        self.basis = _basis(n, d)
        for p in schedule.pulses:
            if max(p.target) >= n:
                raise ValidationError(f"pulse target {list(p.target)} outside a register of {n}")
            if p.kind == "ac_stress" and len(p.target) != 1:
                raise ValidationError("ac pulses address one donor each")
        self.tracks = [EpsilonTrack(reg.baseline_epsilon[k], [p for p in schedule.pulses if k in p.target],
                                    reg.params) for k in range(n)]
        self.f = level_energy_factors()[:d][self.basis]  # (D, n)
        self.w_unit = reg.params.delta_c / HBAR
        self.e_ising = _ising_energies(reg, self.basis)
        self.eps0 = np.array(reg.baseline_epsilon)
        self.w_ref = self.eps0 * self.w_unit  # baseline omega10 per donor
        self.flips = [[_flip(self.basis, d, k, lo) for lo in range(d - 1)] for k in range(n)]
        self.ff = {(p.i, p.j, lo): _flipflop(self.basis, d, p.i, p.j, lo) for p in reg.pairs
                   for lo in range(d - 1)}
        self.z = np.where(self.basis == 1, 1.0, np.where(self.basis == 0, -1.0, 0.0))

    def eps(self, t):
        return np.array([tr.value(t) for tr in self.tracks])

    def diagonal(self, t):
        """Rotating-frame level energies / hbar: stress offsets plus Ising terms."""
        return self.f @ (self.w_unit * (self.eps(t) - self.eps0)) + self.e_ising

    def terms(self, active, t0, t1):
        reg = self.reg
        out = []
        for p in active:
            if p.kind != "ac_stress":
                continue
            k = p.target[0]
            rows, cols = self.flips[k][0]
            amp = functools.partial(_rabi, p.amplitude, k, self.w_unit, reg.params)
            # co-rotating part of 2 Omega cos(w t - phi); the lab option keeps the other half
            out.append(_Term(rows, cols, amp, p.phase, self.w_ref[k] - p.carrier))
            if not self.rwa:
                out.append(_Term(rows, cols, amp, -p.phase, self.w_ref[k] + p.carrier))
        for pc in reg.pairs:
            for lo in range(reg.d - 1):
                rows, cols = self.ff[(pc.i, pc.j, lo)]
                # baseline energy mismatch of the two flip-flop partners
                nu = (self.w_ref[pc.i] - self.w_ref[pc.j]) * (lo + 1)
                fn = reg.g10 if lo == 0 else reg.g21
                out.append(_Term(rows, cols, functools.partial(_pair_amp, fn, pc), 0.0, nu))
        return [tm for tm in out if self._keep(tm, t0, t1)]

    def _keep(self, tm, t0, t1):
        """Secular filter: drop terms detuned by more than SECULAR_RATIO times their size."""
        rates, amps = [], []
        for t in (t0, 0.5 * (t0 + t1), t1):
            dg = self.diagonal(t)
            rates.append(tm.nu + dg[tm.rows] - dg[tm.cols])
            amps.append(abs(tm.amp(self.eps(t))))
        rates = np.array(rates)
        amax = max(amps)
        if amax == 0:
            return False
        crosses = np.any(np.sign(rates[0]) != np.sign(rates[-1]))
        return bool(crosses or np.min(np.abs(rates)) <= SECULAR_RATIO * amax)

    def hamiltonian(self, terms, t):
        h = np.diag(self.diagonal(t)).astype(complex)
        eps = self.eps(t) if terms else None
        for tm in terms:
            a = tm.amp(eps)
            if a == 0:
                continue
            ph = a * np.exp(1j * (tm.nu * t + tm.phase0))
            h[tm.rows, tm.cols] += ph
            h[tm.cols, tm.rows] += np.conj(ph)
        return h

    def dissipator(self, t):
        """Jumps as (rate, src, dst) index maps plus an elementwise dephasing weight."""
        reg = self.reg
        jumps = []
        deph = None
        eps = self.eps(t)
        T = reg.temperature
        if reg.include_relaxation:
            for k in range(reg.n):
                for lo, w in ((0, reg.rates.w10(eps[k])),
                              (1, reg.rates.w21(eps[k]) if reg.d == 3 else 0.0)):
                    if w <= 0:
                        continue
                    nb = bose((lo + 1) * eps[k] * self.w_unit, T)
                    src, dst = self.flips[k][lo]
                    jumps.append(((nb + 1) * w, src, dst))
                    if nb > 0:
                        jumps.append((nb * w, dst, src))
        if reg.include_dephasing and T > 0:
            wt = dephasing_rate(T, reg.params)
            if wt > 0:
                # L = sqrt(W/2) sigma_z per donor on its qubit levels
                diff = self.z[:, None, :] - self.z[None, :, :]
                deph = -0.25 * wt * np.sum(diff**2, axis=-1)
        return jumps, deph

    def total_rate(self, t):
        jumps, deph = self.dissipator(t)
        r = sum(j[0] for j in jumps)
        if deph is not None:
            r += float(np.max(np.abs(deph)))
        return r


def _rabi(amplitude, k, w_unit, params, eps):
    w10 = eps[k] * w_unit
    return rabi_frequency_x(amplitude, w10, params) if w10 > 0 else 0.0


def _pair_amp(fn, pc, eps):
    return 0.5 * fn(pc, eps[pc.i], eps[pc.j])


def _lindblad(jumps, deph, rho):
    out = np.zeros_like(rho)
    D = rho.shape[-1]
    for rate, src, dst in jumps:
        out[..., dst[:, None], dst[None, :]] += rate * rho[..., src[:, None], src[None, :]]
        m = np.zeros(D)
        m[src] = 1.0
        out -= 0.5 * rate * (m[:, None] + m[None, :]) * rho
    if deph is not None:
        out += deph * rho
    return out


def _dissipate(jumps, deph, rho, h):
    """RK4 step of the purely dissipative part (rates*h is kept small)."""
    if not jumps and deph is None:
        return rho
    k1 = _lindblad(jumps, deph, rho)
    k2 = _lindblad(jumps, deph, rho + 0.5 * h * k1)
    k3 = _lindblad(jumps, deph, rho + 0.5 * h * k2)
    k4 = _lindblad(jumps, deph, rho + h * k3)
    return rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


_C1, _C2 = 0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6
_A1, _A2 = 0.25 + math.sqrt(3) / 6, 0.25 - math.sqrt(3) / 6


def _magnus4(eng, terms, t, h):
    """Commutator-free fourth-order Magnus propagator over [t, t+h]."""
    h1 = eng.hamiltonian(terms, t + _C1 * h)
    h2 = eng.hamiltonian(terms, t + _C2 * h)
    first = _expmh(_A2 * h1 + _A1 * h2, h)
    second = _expmh(_A1 * h1 + _A2 * h2, h)
    return first @ second


def _expmh(hmat, h):
    """exp(-i h H) for Hermitian H via its eigendecomposition."""
    w, v = np.linalg.eigh(hmat)
    return (v * np.exp(-1j * h * w)) @ v.conj().T


def _segments(schedule: PulseSchedule):
    edges = {0.0, schedule.total_time}
    for p in schedule.pulses:
        edges.update((p.t_start, p.t_end))
    edges = sorted(e for e in edges if e <= schedule.total_time)
    segs = []
    for t0, t1 in zip(edges[:-1], edges[1:]):
        if t1 - t0 <= 1e-15 * max(1.0, t1):
            continue
        mid = 0.5 * (t0 + t1)
        active = [p for p in schedule.pulses if p.t_start <= mid < p.t_end]
        segs.append((t0, t1, active))
    return segs


def _plan(eng, schedule, dt, steps_per_period):
    """Yield (t0, t1, h, steps, terms, constant, dissipative) for each piece of the schedule."""
    for t0, t1, active in _segments(schedule):
        terms = eng.terms(active, t0, t1)
        ramping = any(p.kind == "ramp_epsilon" for p in active)
        wmax = max((abs(tm.nu) for tm in terms), default=0.0)
        # the Magnus step must resolve the generalised Rabi frequency, not just the carrier offset
        eps_mid = eng.eps(0.5 * (t0 + t1))
        wstep = max((math.hypot(tm.nu, abs(tm.amp(eps_mid))) for tm in terms if tm.nu != 0),
                    default=0.0)
        gmax = max(eng.total_rate(t) for t in (t0, 0.5 * (t0 + t1), t1))
        span = t1 - t0
        if dt is not None:
            if wmax > 0 and dt > 2 * math.pi / (20 * wmax) * (1 + 1e-9):
                raise ValidationError(
                    f"dt={dt:.3g} s gives fewer than 20 steps per period of the fastest term"
                    f" ({wmax:.3g} rad/s)")
            if gmax > 0 and dt * gmax >= 0.1:
                raise ValidationError(f"dt*rate = {dt * gmax:.3g} >= 0.1")
            h_target = dt
        else:
            limits = [span]
            if wstep > 0:
                limits.append(2 * math.pi / (steps_per_period * wstep))
            if gmax > 0:
                limits.append(0.02 / gmax)
            if ramping:
                limits.append(span / 256)
            h_target = min(limits)
        m = max(1, math.ceil(span / h_target - 1e-9))
        yield t0, t1, span / m, m, terms, wmax == 0 and not ramping, gmax > 0


def propagator(reg: Register, schedule: PulseSchedule, dt: float | None = None, *,
               rwa: bool = True, steps_per_period: int = 40, frame: str = "rotating") -> np.ndarray:
    """Unitary of the coherent part of the dynamics (dissipators ignored)."""
    eng = _Engine(reg, schedule, rwa)
    u = np.eye(reg.dim, dtype=complex)
    for t0, _t1, h, m, terms, constant, _ in _plan(eng, schedule, dt, steps_per_period):
        if constant:
            u = np.linalg.matrix_power(_magnus4(eng, terms, t0, h), m) @ u
            continue
        for s in range(m):
            u = _magnus4(eng, terms, t0 + s * h, h) @ u
    if frame == "lab":
        u = np.exp(-1j * (eng.f @ eng.w_ref) * schedule.total_time)[:, None] * u
    return u


def evolve(reg: Register, schedule: PulseSchedule, dt: float | None = None, initial=None, *,
           frame: str = "rotating", rwa: bool = True, steps_per_period: int = 40,
           store_every: int | None = None, process: bool = False, ideal: np.ndarray | None = None,
           check: bool = True) -> EvolutionResult:
    """Integrate the master equation through ``schedule``.

    Each piece between pulse edges is cut into equal steps no longer than
    ``dt`` (automatic if omitted). The coherent part of a step is a
    fourth-order commutator-free Magnus exponential, exact whenever the
    rotating-frame Hamiltonian is constant; phonon dissipators are applied
    in a symmetric split around it. A user ``dt`` must give at least 20
    steps per period of the fastest explicit oscillation and keep
    dt*rate < 0.1 for every dissipator. ``process=True`` also propagates all
    qubit-subspace matrix units so the run can be scored by ``gate_fidelity``.
    """
    if frame not in ("rotating", "lab"):
        raise ValidationError(f"unknown frame {frame!r}")
    eng = _Engine(reg, schedule, rwa)
    D = reg.dim
    rho0 = basis_state(reg, "0" * reg.n) if initial is None else _as_density(reg, initial)
    batch = [rho0]
    qidx = qubit_indices(reg)
    dq = len(qidx)
    if process:
        if dq**2 * D**2 > 2**26:
            raise ValidationError("process tomography of this register is too large for dense storage")
        for a in qidx:
            for b in qidx:
                e = np.zeros((D, D), dtype=complex)
                e[a, b] = 1.0
                batch.append(e)
    rho = np.array(batch)
    traj = [] if store_every else None
    times = [0.0]
    nsteps = 0
    for t0, t1, h, m, terms, constant, dissipative in _plan(eng, schedule, dt, steps_per_period):
        u_const = _magnus4(eng, terms, t0, h) if constant else None
        for s in range(m):
            t = t0 + s * h
            jumps, deph = eng.dissipator(t + 0.5 * h) if dissipative else ([], None)
            rho = _dissipate(jumps, deph, rho, 0.5 * h)
            u = u_const if constant else _magnus4(eng, terms, t, h)
            rho = u @ rho @ u.conj().T
            rho = _dissipate(jumps, deph, rho, 0.5 * h)
            rho[0] = 0.5 * (rho[0] + rho[0].conj().T)
            nsteps += 1
            if store_every and nsteps % store_every == 0:
                traj.append((t + h, _to_frame(eng, rho[0], t + h, frame)))
        times.append(t1)
    T = schedule.total_time
    final = _to_frame(eng, rho[0], T, frame)
    tr_dev = float(abs(np.trace(final) - 1.0))
    herm = float(np.max(np.abs(final - final.conj().T)))
    evals = np.linalg.eigvalsh(0.5 * (final + final.conj().T))
    if check and (tr_dev > 1e-9 or herm > 1e-12 or evals[0] < -1e-9):
        raise NumericalError(
            f"state invariants violated: trace dev {tr_dev:.2e}, hermiticity {herm:.2e},"
            f" min eigenvalue {evals[0]:.2e}")
    leak = None
    if reg.mode == "three_level":
        leak = float(1.0 - np.real(np.sum(np.diag(final)[qidx])))
    channel = None
    if process:
        channel = np.array([_to_frame(eng, r, T, frame) for r in rho[1:]]).reshape(dq, dq, D, D)
    res = EvolutionResult(final, np.array(times), traj, frame, leak, tr_dev, herm,
                          float(evals[0]), nsteps, channel, qidx)
    if ideal is not None and process:
        res.fidelity_report = {"average_gate_fidelity": gate_fidelity(res, ideal)}
    return res


def _to_frame(eng: _Engine, rho, t, frame):
    if frame == "rotating":
        return rho.copy()
    u = np.exp(-1j * (eng.f @ eng.w_ref) * t)
    return u[:, None] * rho * np.conj(u)[None, :]


def _as_density(reg, initial):
    if isinstance(initial, (str, list, tuple)):
        return basis_state(reg, initial)
    a = np.asarray(initial, dtype=complex)
    if a.shape == (reg.dim,):
        a = a / np.linalg.norm(a)
        return np.outer(a, a.conj())
    if a.shape == (reg.dim, reg.dim):
        return a
    raise ValidationError(f"initial state has shape {a.shape}, expected ({reg.dim},) or square")


# --- fidelity -------------------------------------------------------------------

def gate_fidelity(result: EvolutionResult, ideal: np.ndarray) -> float:
    """Average gate fidelity of the propagated channel against a unitary on the qubit subspace."""
    if result.channel is None:
        raise ValidationError("evolve(..., process=True) is needed to score a gate")
    dq = result.channel.shape[0]
    ideal = np.asarray(ideal, dtype=complex)
    if ideal.shape != (dq, dq):
        raise ValidationError(f"ideal unitary has shape {ideal.shape}, expected ({dq}, {dq})")
    qidx = result.qubit_index
    lam = result.channel[:, :, qidx[:, None], qidx[None, :]]  # (dq, dq, dq, dq)
    # F_pro = (1/dq^2) sum_ij <i|U^dag Lambda(|i><j|) U|j>
    f_pro = np.einsum("ai,ijab,bj->", ideal.conj().T, lam, ideal).real / dq**2
    return float((dq * f_pro + 1) / (dq + 1))


def unitary_infidelity(u: np.ndarray, ideal: np.ndarray) -> float:
    """1 - average gate fidelity between two unitaries, from the eigenphases of ideal^dag u.

    Written as a sum of sin^2 of phase differences so that infidelities far
    below machine epsilon are still resolved.
    """
    u = np.asarray(u, dtype=complex)
    ideal = np.asarray(ideal, dtype=complex)
    if u.shape != ideal.shape or u.shape[0] != u.shape[1]:
        raise ValidationError(f"unitary shapes differ: {u.shape} vs {ideal.shape}")
    d = u.shape[0]
    phases = np.angle(np.linalg.eigvals(ideal.conj().T @ u))
    diff = phases[:, None] - phases[None, :]
    pro_infid = 4.0 / d**2 * np.sum(np.triu(np.sin(0.5 * diff) ** 2, 1))
    return float(d * pro_infid / (d + 1))


def restrict(u: np.ndarray, reg: Register) -> np.ndarray:
    """Block of a register operator on the qubit subspace."""
    q = qubit_indices(reg)
    return u[np.ix_(q, q)]


# --- steady state ----------------------------------------------------------------

def steady_state_populations(reg: Register) -> list[np.ndarray]:
    """Per-donor level populations at the undriven Lindblad fixed point."""
    out = []
    wu = reg.params.delta_c / HBAR
    for k in range(reg.n):
        eps = reg.baseline_epsilon[k]
        d = reg.d
        rates = np.zeros((d, d))  # rates[i, j]: j -> i
        w10 = reg.rates.w10(eps) if reg.include_relaxation else 0.0
        n10 = bose(eps * wu, reg.temperature)
        rates[0, 1] = (n10 + 1) * w10
        rates[1, 0] = n10 * w10
        if d == 3:
            w21 = reg.rates.w21(eps) if reg.include_relaxation else 0.0
            n21 = bose(2 * eps * wu, reg.temperature)
            rates[1, 2] = (n21 + 1) * w21
            rates[2, 1] = n21 * w21
        m = rates - np.diag(rates.sum(axis=0))
        if not np.any(m):
            p = np.zeros(d)
            p[0] = 1.0
            out.append(p)
            continue
        # populations of a birth-death chain: detailed balance ratios
        p = np.ones(d)
        for lvl in range(1, d):
            up, down = rates[lvl, lvl - 1], rates[lvl - 1, lvl]
            p[lvl] = p[lvl - 1] * (up / down if down > 0 else 0.0)
        out.append(p / p.sum())
    return out


def thermal_ratio(omega: float, temperature: float) -> float:
    """k_B T / (hbar omega)."""
    return K_B * temperature / (HBAR * omega)


def dump_result(result: EvolutionResult, path=None, meta: dict | None = None) -> str:
    doc = {"meta": meta or {}, "result": result.to_json_dict()}
    text = json.dumps(doc, sort_keys=True, indent=1)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text
