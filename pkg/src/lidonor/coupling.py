"""Phonon-mediated donor-donor couplings.

``coupling_integral`` evaluates the static second-order exchange of one
virtual phonon,

    G/hbar = (1/hbar^2) int d^3q/(2pi)^3 sum_nu V_i V_j^* exp(i q.R) / Omega,

numerically. The angular part is projected on Legendre polynomials of
q.R; each radial integral runs on the real axis up to q1 = c/R and is
continued along q1 + i t, where the Hankel function decays like exp(-tR).
Envelope form factors are analytic, so the only singularities skipped by
the rotation are poles at Im q ~ 1/a_B whose weight is exp(-R/a_B).

The closed forms (``ret_coupling_10``, ``ret_coupling_21``,
``ising_coupling``) are the long-wavelength results for R normal to <001>.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import eval_legendre, spherical_jn

from .levels import LevelStructure, ValleyState, manifold
from .phonons import BRANCHES, polarizations, reduced_amplitude, speed, sphere_grid
from .units import HBAR, MaterialParams, ValidationError, derive


class GeometryError(ValueError):
    pass


class StaticLimitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DonorPairGeometry:
    r_vec: np.ndarray
    in_plane: bool = True

    def __post_init__(self):
        r = np.asarray(self.r_vec, dtype=float)
        object.__setattr__(self, "r_vec", r)
        if not np.linalg.norm(r) > 0:
            raise GeometryError("donor separation must be non-zero")
        if self.in_plane and r[2] != 0.0:
            raise GeometryError("in-plane geometry requires R.z = 0")

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.r_vec))


def in_plane(distance: float, angle: float = 0.0) -> DonorPairGeometry:
    return DonorPairGeometry(np.array([distance * math.cos(angle), distance * math.sin(angle), 0.0]))


@dataclass(frozen=True)
class CouplingSet:
    g10: float
    g21: float
    j_ising: float


@dataclass(frozen=True)
class CouplingQuad:
    n_theta: int = 48
    n_phi: int = 96
    l_max: int = 16
    n_radial: int = 128
    n_laguerre: int = 48
    q1_times_r: float = 40.0


@dataclass(frozen=True)
class CouplingResult:
    value: float  # angular frequency G/hbar
    static_ratio: float
    static_ok: bool


def _hankel1_envelope(l, z):
    """h_l^(1)(z) * exp(-i z) for complex z (finite series, fine for |z| >~ l)."""
    s = np.zeros_like(z, dtype=complex)
    term_c = 1.0
    for k in range(l + 1):
        if k > 0:
            term_c = term_c * (l + k) * (l - k + 1) / k
        s = s + term_c * (1j / (2 * z)) ** k
    return (-1j) ** (l + 1) * s / z


def _angular_moments(bra_i, ket_i, bra_j, ket_j, qs, rhat, params, quad, intra, inter):
    """A_l(q) * q^2 summed over branches: int dOmega P_l(qhat.Rhat) sum_nu u_i u_j / u_nu^2."""
    qhat, w = sphere_grid(quad.n_theta, quad.n_phi)
    pols = polarizations(qhat)
    cos_r = qhat @ rhat
    pl = np.stack([eval_legendre(l, cos_r) for l in range(quad.l_max + 1)])  # (L, M)
    out = np.zeros((len(qs), quad.l_max + 1), dtype=complex)
    for b in BRANCHES:
        e = pols[BRANCHES.index(b)]
        u2 = speed(b, params) ** 2
        for n, q in enumerate(qs):
            qv = q * qhat
            ui = reduced_amplitude(bra_i, ket_i, qv, e, params, intra, inter)
            uj = ui if (bra_j is bra_i and ket_j is ket_i) else reduced_amplitude(
                bra_j, ket_j, qv, e, params, intra, inter)
            # real q: u_i conj(u_j) == u_i u_j; the unconjugated product continues analytically
            f = ui * uj / u2
            out[n] += pl @ (w * f)
    return out


def _radial(bra_i, ket_i, bra_j, ket_j, r_vec, params, quad, intra=True, inter=True):
    R = float(np.linalg.norm(r_vec))
    rhat = np.asarray(r_vec, dtype=float) / R
    q1 = quad.q1_times_r / R
    x, wx = np.polynomial.legendre.leggauss(quad.n_radial)
    qr = 0.5 * q1 * (x + 1)
    wr = 0.5 * q1 * wx
    s, ws = np.polynomial.laguerre.laggauss(quad.n_laguerre)
    qc = q1 + 1j * s / R
    moments_r = _angular_moments(bra_i, ket_i, bra_j, ket_j, qr, rhat, params, quad, intra, inter)
    moments_c = _angular_moments(bra_i, ket_i, bra_j, ket_j, qc, rhat, params, quad, intra, inter)
    total = 0.0 + 0.0j
    for l in range(quad.l_max + 1):
        near = np.sum(wr * moments_r[:, l].real * spherical_jn(l, qr * R))
        env = _hankel1_envelope(l, qc * R)
        tail = (1j * np.exp(1j * q1 * R) / R * np.sum(ws * moments_c[:, l] * env)).real
        total += (2 * l + 1) * (1j**l) * (near + tail)
    # 1/(2 rho) * 1/(2pi)^3 ; divide by hbar for an angular frequency
    g = total / (2 * params.rho * (2 * math.pi) ** 3)
    return g.real / HBAR


def coupling_integral(mu_i: ValleyState, mu_i_p: ValleyState, mu_j: ValleyState, mu_j_p: ValleyState,
                      geom: DonorPairGeometry, level: LevelStructure, params: MaterialParams,
                      quad: CouplingQuad = CouplingQuad(), include_intravalley: bool = True,
                      include_intervalley: bool = True) -> CouplingResult:
    """G_{mu_i mu_i', mu_j mu_j'}/hbar for donors separated by ``geom`` (static limit)."""
    w_i = abs(mu_i.energy - mu_i_p.energy) / HBAR
    w_j = abs(mu_j.energy - mu_j_p.energy) / HBAR
    ratio = max(w_i, w_j) * geom.distance / params.u_t
    ok = ratio < 0.3
    if not ok:
        warnings.warn(f"static-limit condition omega R/u_t = {ratio:.3g} >= 0.3",
                      StaticLimitWarning, stacklevel=2)
    value = _radial(mu_i.alpha, mu_i_p.alpha, mu_j.alpha, mu_j_p.alpha, geom.r_vec, params, quad,
                    include_intravalley, include_intervalley)
    return CouplingResult(value, ratio, ok)


def oracle_g10(geom, level, params, quad=CouplingQuad()) -> CouplingResult:
    s0, s1 = level.state("S0"), level.state("S1")
    return coupling_integral(s1, s0, s0, s1, geom, level, params, quad)


def oracle_g21(geom, level, params, quad=CouplingQuad()) -> CouplingResult:
    s1, s2 = level.state("S1"), level.state("S2")
    return coupling_integral(s2, s1, s1, s2, geom, level, params, quad)


def oracle_ising(geom, level, params, quad=CouplingQuad()) -> float:
    """J from the diagonal integrals; the factor 2 is the Hermitian-conjugate
    partner each diagonal term carries in the pair Hamiltonian."""
    s0, s1 = level.state("S0"), level.state("S1")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StaticLimitWarning)
        g1111 = coupling_integral(s1, s1, s1, s1, geom, level, params, quad).value
        g0000 = coupling_integral(s0, s0, s0, s0, geom, level, params, quad).value
        g0011 = coupling_integral(s0, s0, s1, s1, geom, level, params, quad).value
        g1100 = coupling_integral(s1, s1, s0, s0, geom, level, params, quad).value
    return 2.0 * (g1111 + g0000 - g0011 - g1100)


# --- closed forms -------------------------------------------------------------

def _require_in_plane(geom_or_r):
    if isinstance(geom_or_r, DonorPairGeometry):
        if geom_or_r.r_vec[2] != 0.0:
            raise GeometryError("closed-form couplings require R normal to <001>")
        return geom_or_r.distance
    r = float(geom_or_r)
    if not r > 0:
        raise ValidationError("distance must be positive")
    return r


def gamma_21(params: MaterialParams) -> float:
    return 5.0 / 16.0 * (2 + 7 * (1 - params.u_t**2 / params.u_l**2))


def ret_coupling_10(r, epsilon: float, params: MaterialParams, w10: float | None = None) -> float:
    """RET constant of the |0>-|1> transition (R^-5 law), rad/s."""
    from .phonons import decay_rate_closed_form_10

    R = _require_in_plane(r)
    level = manifold(epsilon, params)
    if w10 is None:
        w10 = decay_rate_closed_form_10(epsilon, params)
    sigma = derive(params).sigma
    shape = 3 - params.u_t**2 / params.u_l**2 * (4 * sigma + 5)
    return w10 * 315.0 / 16.0 * shape * (params.u_t / (level.omega10 * R)) ** 5


def ret_coupling_21(r, epsilon: float, params: MaterialParams, w21: float) -> float:
    """RET constant of the |1>-|2> transition (R^-3 law), rad/s."""
    R = _require_in_plane(r)
    level = manifold(epsilon, params)
    return w21 * gamma_21(params) * (params.u_t / (level.omega21 * R)) ** 3


def ising_coupling(r, params: MaterialParams) -> float:
    """Ising (ZZ) constant J, sign retained (negative for Si), rad/s."""
    R = _require_in_plane(r)
    return (params.xi_u**2 / (32 * math.pi * HBAR * params.rho * params.u_t**2 * R**3)
            * (-1 + 5.0 / 3.0 * params.u_t**2 / params.u_l**2))


def pair_couplings(r, epsilon: float, params: MaterialParams, w21: float | None = None,
                   w10: float | None = None) -> CouplingSet:
    if w21 is None:
        from .phonons import w21_table
        w21 = w21_table(params)(epsilon) if epsilon > 0 else 0.0
    if epsilon == 0:
        return CouplingSet(0.0, 0.0, ising_coupling(r, params))
    return CouplingSet(ret_coupling_10(r, epsilon, params, w10), ret_coupling_21(r, epsilon, params, w21),
                       ising_coupling(r, params))
