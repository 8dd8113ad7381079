"""Envelope functions, deformation-potential coupling and phonon-limited rates.

Crystal volume never appears: every k- or q-sum is taken in the continuum
limit, so amplitudes here are "per unit volume" (the 1/sqrt(V) of a mode
normalisation is dropped and sums become integrals d^3q/(2pi)^3).
"""

from __future__ import annotations

import enum
import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .levels import PARTNER, VALLEY_AXES, LevelStructure, ValleyState, manifold
from .units import HBAR, K_B, MaterialParams, ValidationError, derive


class Branch(str, enum.Enum):
    L = "L"
    T1 = "T1"
    T2 = "T2"


BRANCHES = (Branch.L, Branch.T1, Branch.T2)


class DegenerateInputError(ValueError):
    pass


class EmptySelectionError(ValueError):
    pass


class QuadratureError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class LongWavelengthWarning(UserWarning):
    pass


VALLEY_CENTER_FRACTION = 0.85


def valley_index(j: int) -> int:
    """Map a signed valley label (+-1, +-2, +-3) to the row of VALLEY_AXES."""
    if j not in (1, -1, 2, -2, 3, -3):
        raise ValueError(f"valley index must be one of +-1, +-2, +-3, got {j}")
    return 2 * (abs(j) - 1) + (0 if j > 0 else 1)


def speed(branch: Branch, params: MaterialParams) -> float:
    return params.u_l if Branch(branch) is Branch.L else params.u_t


def polarizations(qhat: np.ndarray) -> np.ndarray:
    """Polarisation vectors (L, T1, T2) for unit directions ``qhat`` of shape (..., 3).

    Returns shape (3, ..., 3). T1 lies in the plane normal to q and z (x if q||z).
    """
    qhat = np.asarray(qhat, dtype=float)
    ref = np.zeros_like(qhat)
    ref[..., 2] = 1.0
    t1 = np.cross(ref, qhat)
    n1 = np.linalg.norm(t1, axis=-1, keepdims=True)
    small = n1[..., 0] < 1e-8
    if np.any(small):
        alt = np.zeros_like(qhat)
        alt[..., 0] = 1.0
        t1[small] = np.cross(qhat[small], np.cross(alt[small], qhat[small]))
        n1 = np.linalg.norm(t1, axis=-1, keepdims=True)
    t1 = t1 / n1
    t2 = np.cross(qhat, t1)
    return np.stack([qhat, t1, t2])


@dataclass(frozen=True)
class PhononMode:
    q: np.ndarray
    branch: Branch
    polarization: np.ndarray
    speed: float

    @property
    def omega(self) -> float:
        return self.speed * float(np.linalg.norm(self.q))


def make_mode(q, branch: Branch | str, params: MaterialParams) -> PhononMode:
    q = np.asarray(q, dtype=float)
    qn = np.linalg.norm(q)
    branch = Branch(branch)
    if qn == 0:
        e = np.array([0.0, 0.0, 1.0])
    else:
        e = polarizations(q / qn)[BRANCHES.index(branch)]
    return PhononMode(q, branch, e, speed(branch, params))


@dataclass(frozen=True)
class TransitionSpec:
    from_state: ValleyState
    to_state: ValleyState
    omega: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ValidationError("transition frequency must be positive for emission")


def transition(level: LevelStructure, src: str, dst: str, omega: float | None = None) -> TransitionSpec:
    a, b = level.state(src), level.state(dst)
    if omega is None:
        omega = (a.energy - b.energy) / HBAR
    return TransitionSpec(a, b, omega)


# --- envelopes -------------------------------------------------------------

def envelope_peak(params: MaterialParams) -> float:
    return 8.0 * math.sqrt(math.pi * params.a_perp**4 * params.a_par)


def envelope_k(j: int, k, params: MaterialParams) -> np.ndarray:
    """Momentum-space Kohn-Luttinger 1s envelope of valley ``j``.

    Normalised as int |A|^2 d^3k/(2pi)^3 = 1; the valley centre sits at
    0.85 * 2pi/a_Si along the valley axis.
    """
    axis = VALLEY_AXES[valley_index(j)]
    k = np.asarray(k, dtype=float)
    kp = k - VALLEY_CENTER_FRACTION * 2 * math.pi / params.a_si * axis
    kpar = kp @ axis
    kperp2 = np.sum(kp * kp, axis=-1) - kpar**2
    return envelope_peak(params) / (1.0 + params.a_perp**2 * kperp2 + params.a_par**2 * kpar**2) ** 2


def form_factor(q, axis, params: MaterialParams):
    """Overlap int A(k) A(k+q) d^3k/(2pi)^3 of one valley envelope with itself.

    Equals the Fourier transform of the anisotropic 1s density,
    [1 + (a_perp^2 q_perp^2 + a_par^2 q_par^2)/4]^-2. Complex q is allowed
    (analytic continuation; squares are not conjugated).
    """
    q = np.asarray(q)
    axis = np.asarray(axis, dtype=float)
    qpar = q @ axis
    q2 = np.sum(q * q, axis=-1)
    x = params.a_perp**2 * (q2 - qpar**2) + params.a_par**2 * qpar**2
    return 1.0 / (1.0 + 0.25 * x) ** 2


def form_factor_quadrature(q, axis, params: MaterialParams, order: int = 48) -> float:
    """Same overlap by direct 3D quadrature of the k-space envelopes (cross-check)."""
    axis = np.asarray(axis, dtype=float)
    q = np.asarray(q, dtype=float)
    # scaled coordinates kappa = (a_perp k_perp, a_par k_par): envelope -> (1+kappa^2)^-2
    e1 = np.cross(axis, [1.0, 0, 0] if abs(axis[0]) < 0.9 else [0, 1.0, 0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    Q = np.array([params.a_perp * (q @ e1), params.a_perp * (q @ e2), params.a_par * (q @ axis)])
    x, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (x + 1)
    wt = 0.5 * w
    r = t / (1 - t)
    wr = wt / (1 - t) ** 2
    mu, wmu = np.polynomial.legendre.leggauss(order)
    phi = 2 * math.pi * (np.arange(2 * order) + 0.5) / (2 * order)
    wphi = 2 * math.pi / (2 * order)
    R, MU, PHI = np.meshgrid(r, mu, phi, indexing="ij")
    W = np.einsum("i,j->ij", wr * r**2, wmu)[..., None] * wphi
    s = np.sqrt(1 - MU**2)
    K = np.stack([R * s * np.cos(PHI), R * s * np.sin(PHI), R * MU], axis=-1)
    a = 1.0 / (1 + np.sum(K * K, -1)) ** 2
    b = 1.0 / (1 + np.sum((K + Q) ** 2, -1)) ** 2
    # (8 sqrt(pi))^2 normalisation of the scaled envelope over (2 pi)^3
    return float(np.sum(W * a * b) * 64 * math.pi / (2 * math.pi) ** 3)


# --- matrix elements -------------------------------------------------------

def mode_norm(omega, params: MaterialParams):
    """sqrt(hbar / (2 rho Omega)) with the crystal volume absorbed."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise DegenerateInputError("phonon frequency must be positive")
    return np.sqrt(HBAR / (2 * params.rho * omega))


def deformation_matrix_element(j: int, mode: PhononMode, params: MaterialParams) -> complex:
    """Long-wavelength electron-phonon amplitude of valley ``j`` for one mode."""
    k = VALLEY_AXES[valley_index(j)]
    q, e = mode.q, mode.polarization
    bracket = params.xi_u * (k @ q) * (k @ e) + params.xi_d * (q @ e)
    return complex(mode_norm(mode.omega, params) * bracket)


def reduced_amplitude(alpha_bra, alpha_ket, q, e, params: MaterialParams,
                      intravalley: bool = True, intervalley: bool = True):
    """Transition amplitude divided by sqrt(hbar/2 rho Omega), vectorised.

    ``q`` (..., 3) may be complex along a fixed real direction; ``e`` (..., 3)
    are real polarisations. Only the intravalley term and the closest
    j -> -j umklapp overlap (displacement kappa0 along k_j) are kept.
    """
    if not (intravalley or intervalley):
        raise EmptySelectionError("at least one of intravalley/intervalley must be enabled")
    kappa0 = derive(params).kappa0
    q = np.asarray(q)
    e = np.asarray(e, dtype=float)
    out = np.zeros(np.broadcast_shapes(q.shape, e.shape)[:-1], dtype=complex)
    qe = np.sum(q * e, axis=-1)
    for j in range(6):
        c_intra = alpha_bra[j] * alpha_ket[j] if intravalley else 0.0
        c_inter = alpha_bra[j] * alpha_ket[PARTNER[j]] if intervalley else 0.0
        if c_intra == 0 and c_inter == 0:
            continue
        k = VALLEY_AXES[j]
        m = params.xi_u * (q @ k) * (e @ k) + params.xi_d * qe
        overlap = 0.0
        if c_intra:
            overlap = overlap + c_intra * form_factor(q, k, params)
        if c_inter:
            overlap = overlap + c_inter * form_factor(q + kappa0 * k, k, params)
        out = out + m * overlap
    return out


def transition_matrix_element(spec: TransitionSpec, mode: PhononMode, level: LevelStructure | None,
                              params: MaterialParams, include_intervalley: bool = True,
                              include_intravalley: bool = True) -> complex:
    amp = reduced_amplitude(spec.to_state.alpha, spec.from_state.alpha, mode.q, mode.polarization,
                            params, include_intravalley, include_intervalley)
    return complex(mode_norm(mode.omega, params) * amp)


# --- rates -----------------------------------------------------------------

@dataclass(frozen=True)
class QuadSettings:
    n_theta: int = 64
    n_phi: int = 128
    rel_tol: float = 1e-3

    def halved(self) -> "QuadSettings":
        return QuadSettings(max(self.n_theta // 2, 4), max(self.n_phi // 2, 8), self.rel_tol)

    def doubled(self) -> "QuadSettings":
        return QuadSettings(self.n_theta * 2, self.n_phi * 2, self.rel_tol)


@functools.lru_cache(maxsize=32)
def sphere_grid(n_theta: int, n_phi: int):
    """Product Gauss-Legendre (cos theta) x trapezoid (phi) nodes on the unit sphere."""
    mu, wmu = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * math.pi * np.arange(n_phi) / n_phi
    MU, PHI = np.meshgrid(mu, phi, indexing="ij")
    s = np.sqrt(1 - MU**2)
    qhat = np.stack([s * np.cos(PHI), s * np.sin(PHI), MU], axis=-1).reshape(-1, 3)
    w = (wmu[:, None] * np.full(n_phi, 2 * math.pi / n_phi)[None, :]).reshape(-1)
    qhat.setflags(write=False)
    w.setflags(write=False)
    return qhat, w


@dataclass(frozen=True)
class RateResult:
    total: float
    by_branch: dict = field(default_factory=dict)
    error_estimate: float = 0.0
    settings: QuadSettings = QuadSettings()


def _shell_rates(spec, params, quad, branches, intra, inter):
    qhat, w = sphere_grid(quad.n_theta, quad.n_phi)
    pols = polarizations(qhat)
    out = {}
    for b in BRANCHES:
        if b not in branches:
            out[b.value] = 0.0
            continue
        u = speed(b, params)
        qn = spec.omega / u
        amp = reduced_amplitude(spec.to_state.alpha, spec.from_state.alpha, qn * qhat,
                                pols[BRANCHES.index(b)], params, intra, inter)
        ang = float(np.sum(w * np.abs(amp) ** 2))
        # 2pi/hbar^2 * int d^3q/(2pi)^3 |V|^2 delta(omega - u q)
        out[b.value] = qn**2 * ang / (8 * math.pi**2 * HBAR * params.rho * spec.omega * u)
    return out


def decay_rate_oracle(spec: TransitionSpec, level: LevelStructure | None, params: MaterialParams,
                      quad: QuadSettings = QuadSettings(), branches=BRANCHES,
                      include_intravalley: bool = True, include_intervalley: bool = True) -> RateResult:
    """Zero-temperature golden-rule emission rate by angular quadrature on the energy shell."""
    branches = tuple(Branch(b) for b in branches)
    fine = _shell_rates(spec, params, quad, branches, include_intravalley, include_intervalley)
    coarse = _shell_rates(spec, params, quad.halved(), branches, include_intravalley,
                          include_intervalley)
    total = math.fsum(fine.values())
    coarse_total = math.fsum(coarse.values())
    err = abs(total - coarse_total) / total if total > 0 else abs(coarse_total)
    if total > 0 and err > quad.rel_tol:
        raise QuadratureError(
            f"angular quadrature not converged (relative change {err:.2e} > {quad.rel_tol:.0e})",
            {"fine": total, "coarse": coarse_total, "settings": quad},
        )
    return RateResult(total, fine, err, quad)


def long_wavelength_ratio(epsilon: float, params: MaterialParams) -> float:
    """2 pi u_t / omega10 divided by a_par; the closed-form rate needs this >> 1."""
    w = epsilon * params.delta_c / HBAR
    return math.inf if w == 0 else 2 * math.pi * params.u_t / w / params.a_par


def suppression_factor(epsilon: float, params: MaterialParams) -> float:
    """Envelope-overlap factor 8 a^2 / 35 (a_par kappa0 / 2)^-10 of the 1->0 rate."""
    a = manifold(epsilon, params).a_coef
    x = params.a_par * derive(params).kappa0
    return 8 * a * a / 35 * (x / 2) ** -10


def decay_rate_closed_form_10(epsilon: float, params: MaterialParams, omega10: float | None = None) -> float:
    """Phonon decay rate of |1> -> |0> (transverse, long-wavelength closed form), 1/s."""
    level = manifold(epsilon, params)
    w = level.omega10 if omega10 is None else omega10
    ratio = long_wavelength_ratio(epsilon, params) if omega10 is None else (
        2 * math.pi * params.u_t / w / params.a_par)
    if ratio < 10:
        warnings.warn(f"long-wavelength condition marginal: 2 pi u_t/(omega a_par) = {ratio:.3g}",
                      LongWavelengthWarning, stacklevel=2)
    x = params.a_par * derive(params).kappa0
    a = level.a_coef
    return (2.0 / 35.0 * a * a * x * x / (1 + x * x / 4) ** 6
            * params.xi_u**2 * w**5 * params.a_par**2
            / (math.pi * HBAR * params.rho * params.u_t**7))


def decay_rate_21(epsilon: float, params: MaterialParams, quad: QuadSettings = QuadSettings()) -> float:
    level = manifold(epsilon, params)
    return decay_rate_oracle(transition(level, "S2", "S1"), level, params, quad).total


def decay_rate_10_oracle(epsilon: float, params: MaterialParams, quad: QuadSettings = QuadSettings(),
                         branches=(Branch.T1, Branch.T2)) -> float:
    level = manifold(epsilon, params)
    return decay_rate_oracle(transition(level, "S1", "S0"), level, params, quad, branches).total


class W21Table:
    """W21(epsilon) from the golden-rule oracle on a log grid, monotone interpolation."""

    def __init__(self, params: MaterialParams, quad: QuadSettings = QuadSettings(),
                 eps_min: float = 1e-4, eps_max: float = 2.5, points: int = 41):
        self.params = params
        self.eps = np.geomspace(eps_min, eps_max, points)
        self.rates = np.array([decay_rate_21(e, params, quad) for e in self.eps])
        self._interp = PchipInterpolator(np.log(self.eps), np.log(self.rates))

    def __call__(self, epsilon):
        epsilon = np.asarray(epsilon, dtype=float)
        if np.any(epsilon < self.eps[0]) or np.any(epsilon > self.eps[-1]):
            raise ValidationError(
                f"epsilon outside the cached W21 range [{self.eps[0]:g}, {self.eps[-1]:g}]")
        out = np.exp(self._interp(np.log(epsilon)))
        return float(out) if out.ndim == 0 else out


@functools.lru_cache(maxsize=8)
def w21_table(params: MaterialParams, quad: QuadSettings = QuadSettings()) -> W21Table:
    return W21Table(params, quad)


def bose(omega: float, temperature: float) -> float:
    """Planck occupation of a mode of angular frequency ``omega`` at ``temperature`` (K)."""
    if temperature <= 0 or omega <= 0:
        return 0.0
    x = HBAR * omega / (K_B * temperature)
    return 0.0 if x > 700 else 1.0 / math.expm1(x)


def thermal_emission(rate0: float, omega: float, temperature: float) -> float:
    return (bose(omega, temperature) + 1.0) * rate0


def dephasing_rate(temperature: float, params: MaterialParams) -> float:
    if temperature < 0:
        raise ValidationError("temperature must be non-negative")
    return params.nu0 * (temperature / params.t0) ** 11
