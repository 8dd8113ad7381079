"""Unit system and silicon/lithium material constants.

Everything inside the package is CGS-Gaussian (erg, cm, s, g, K). The
command line, configuration files and JSON/CSV outputs use the friendlier
units meV, nm, ns, mK and dyn/cm^2; the helpers below convert at that
boundary.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Mapping

from scipy import constants as _si

# CODATA values converted to CGS
HBAR = _si.hbar * 1e7  # erg s
K_B = _si.k * 1e7  # erg / K
EV = _si.eV * 1e7  # erg
MEV = 1e-3 * EV
NM = 1e-7  # cm
ANGSTROM = 1e-8  # cm
NS = 1e-9  # s
MK = 1e-3  # K

CONFIG_ENV = "LIDONOR_CONFIG"


class ConfigurationError(ValueError):
    """Unknown or malformed configuration entry."""


class ValidationError(ValueError):
    """A physical parameter or input lies outside its allowed range."""


@dataclass(frozen=True)
class MaterialParams:
    """Material constants in CGS units.

    ``delta_c`` is the valley-orbit unit (6*delta_c = 1.76 meV for Li:Si),
    ``nu0``/``t0`` set the quasi-elastic dephasing law.
    """

    xi_u: float = 8.77 * EV
    xi_d: float = 1.1 * EV
    rho: float = 2.329
    u_t: float = 5.41e5
    u_l: float = 9.04e5
    s11: float = 7.68e-13
    s12: float = -2.14e-13
    a_si: float = 5.431 * ANGSTROM
    a_par: float = 14.2 * ANGSTROM
    a_perp: float = 25.0 * ANGSTROM
    delta_c: float = 1.76 * MEV / 6.0
    nu0: float = 2e14
    t0: float = 19.0

    def __post_init__(self):
        validate(self)


@dataclass(frozen=True)
class DerivedParams:
    kappa0: float  # closest intervalley (umklapp) separation, 1/cm
    sigma: float  # xi_d / xi_u
    t0_check: float  # hbar u_t / (k_B a_perp), K


# field -> (API key, factor taking API value to CGS)
API_UNITS: dict[str, tuple[str, float]] = {
    "xi_u": ("xi_u_eV", EV),
    "xi_d": ("xi_d_eV", EV),
    "rho": ("rho_g_cm3", 1.0),
    "u_t": ("u_t_cm_s", 1.0),
    "u_l": ("u_l_cm_s", 1.0),
    "s11": ("s11_cm2_dyn", 1.0),
    "s12": ("s12_cm2_dyn", 1.0),
    "a_si": ("a_si_nm", NM),
    "a_par": ("a_par_nm", NM),
    "a_perp": ("a_perp_nm", NM),
    "delta_c": ("delta_c_meV", MEV),
    "nu0": ("nu0_Hz", 1.0),
    "t0": ("t0_mK", MK),
}

SOURCES = {
    "xi_u": "uniaxial conduction-band deformation potential of Si, 8.77 eV",
    "xi_d": "dilational deformation potential of Si, 1.1 eV",
    "rho": "Si mass density, 2.329 g/cm^3",
    "u_t": "Si transverse sound speed, 5.41e5 cm/s",
    "u_l": "Si longitudinal sound speed, 9.04e5 cm/s",
    "s11": "Si elastic compliance s11, 7.68e-13 cm^2/dyn",
    "s12": "Si elastic compliance s12, -2.14e-13 cm^2/dyn",
    "a_si": "Si lattice constant, 5.431 A",
    "a_par": "Kohn-Luttinger Bohr radius along the valley axis, 14.2 A",
    "a_perp": "Kohn-Luttinger Bohr radius transverse to the valley axis, 25 A",
    "delta_c": "Li:Si valley-orbit unit, 6*delta_c = 1.76 meV",
    "nu0": "dephasing prefactor, 2e14 Hz",
    "t0": "dephasing temperature scale, 19 K",
}


def validate(p: MaterialParams) -> None:
    for f in fields(p):
        v = getattr(p, f.name)
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ValidationError(f"{f.name} must be a finite number, got {v!r}")
        if f.name in ("xi_d", "s12"):
            continue
        if v <= 0:
            raise ValidationError(f"{f.name} must be positive, got {v!r}")
    if p.u_l <= p.u_t:
        raise ValidationError(f"u_l ({p.u_l}) must exceed u_t ({p.u_t})")
    if p.s11 - p.s12 <= 0:
        raise ValidationError("s11 - s12 must be positive")


def build_materials(overrides: Mapping[str, float] | None = None) -> MaterialParams:
    """Defaults merged with ``overrides`` (field names, CGS values)."""
    overrides = dict(overrides or {})
    known = {f.name for f in fields(MaterialParams)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise ConfigurationError(f"unknown material parameter(s): {', '.join(unknown)}")
    return replace(MaterialParams(), **{k: float(v) for k, v in overrides.items()})


def overrides_from_api(cfg: Mapping[str, float]) -> dict[str, float]:
    """Translate an API-unit mapping (``{"xi_u_eV": 8.77}``) to CGS field overrides."""
    by_key = {key: (name, factor) for name, (key, factor) in API_UNITS.items()}
    out = {}
    for key, value in cfg.items():
        if key not in by_key:
            raise ConfigurationError(
                f"unknown configuration key {key!r}; expected one of {sorted(by_key)}"
            )
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"configuration value for {key!r} must be a number")
        name, factor = by_key[key]
        out[name] = float(value) * factor
    return out


def load_config(path: str | os.PathLike | None = None) -> tuple[MaterialParams, dict]:
    """Read a JSON config (explicit path, else $LIDONOR_CONFIG, else defaults).

    Returns the material parameters and the raw API-unit overrides so they
    can be echoed into output headers.
    """
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return MaterialParams(), {}
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("config file must hold a JSON object")
    return build_materials(overrides_from_api(raw)), raw


def to_api(p: MaterialParams) -> dict[str, float]:
    return {key: getattr(p, name) / factor for name, (key, factor) in API_UNITS.items()}


def derive(p: MaterialParams) -> DerivedParams:
    return DerivedParams(
        kappa0=0.6 * math.pi / p.a_si,
        sigma=p.xi_d / p.xi_u,
        t0_check=HBAR * p.u_t / (K_B * p.a_perp),
    )


def energy_to_angular_frequency(energy: float) -> float:
    """erg -> rad/s."""
    return energy / HBAR


def angular_frequency_to_energy(omega: float) -> float:
    return omega * HBAR


def mev_to_rad_s(e_mev: float) -> float:
    return e_mev * MEV / HBAR


def rad_s_to_mev(omega: float) -> float:
    return omega * HBAR / MEV


def nm_to_cm(x: float) -> float:
    return x * NM


def cm_to_nm(x: float) -> float:
    return x / NM


def ns_to_s(t: float) -> float:
    return t * NS


def s_to_ns(t: float) -> float:
    return t / NS


def mk_to_k(t: float) -> float:
    return t * MK


def k_to_mk(t: float) -> float:
    return t / MK


# stress is already CGS (dyn/cm^2); kept for symmetry at the API boundary
def dyn_cm2(x: float) -> float:
    return float(x)


def as_dict(p: MaterialParams) -> dict[str, float]:
    return asdict(p)
