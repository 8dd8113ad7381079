"""Valley-orbit structure of the Li 1s(E+T2) manifold under <001> compression."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .units import HBAR, MaterialParams, ValidationError

# valley order: +x, -x, +y, -y, +z, -z
VALLEY_AXES = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float
)
# index of the inverted valley j -> -j
PARTNER = np.array([1, 0, 3, 2, 5, 4])

EPS_MAX = 3.0


class Parity(str, enum.Enum):
    EVEN = "even"
    ODD = "odd"


class ParityError(ValueError):
    """Valley coefficients are neither symmetric nor antisymmetric."""


@dataclass(frozen=True)
class ValleyState:
    label: str
    alpha: np.ndarray
    parity: Parity
    energy: float  # erg, relative to |0>


@dataclass(frozen=True)
class LevelStructure:
    epsilon: float
    a_coef: float
    b_coef: float
    states: tuple[ValleyState, ...]
    omega10: float
    omega21: float

    def state(self, label: str) -> ValleyState:
        for s in self.states:
            if s.label == label:
                return s
        raise KeyError(label)

    @property
    def ground(self) -> ValleyState:
        return self.states[0]

    @property
    def first(self) -> ValleyState:
        return self.states[1]

    @property
    def second(self) -> ValleyState:
        return self.states[2]


def epsilon_from_stress(f_z: float, params: MaterialParams) -> float:
    """Dimensionless splitting parameter for a compressive stress ``f_z`` (dyn/cm^2)."""
    if f_z < 0:
        raise ValidationError("stress magnitude must be non-negative (compression)")
    return params.xi_u * (params.s11 - params.s12) * f_z / (3.0 * params.delta_c)


def stress_from_epsilon(epsilon: float, params: MaterialParams) -> float:
    return 3.0 * params.delta_c * epsilon / (params.xi_u * (params.s11 - params.s12))


def singlet_coefficients(epsilon: float) -> tuple[float, float]:
    """(a, b) of the even singlet, renormalised so that 2a^2 + 4b^2 = 1."""
    a = (6.0 + epsilon) / (6.0 * math.sqrt(3.0))
    b = (3.0 - epsilon) / (6.0 * math.sqrt(3.0))
    norm = math.sqrt(2 * a * a + 4 * b * b)
    return a / norm, b / norm


def omega10(epsilon: float, params: MaterialParams) -> float:
    return epsilon * params.delta_c / HBAR


def level_energy_factors() -> np.ndarray:
    """Energies of |0>, |1>, |2> in units of epsilon*delta_c."""
    return np.array([0.0, 1.0, 3.0])


def parity_of(alpha) -> Parity:
    alpha = np.asarray(alpha, dtype=float)
    inv = alpha[PARTNER]
    scale = max(np.max(np.abs(alpha)), 1e-300)
    if np.allclose(inv, alpha, atol=1e-12 * scale):
        return Parity.EVEN
    if np.allclose(inv, -alpha, atol=1e-12 * scale):
        return Parity.ODD
    raise ParityError(f"valley amplitudes {alpha.tolist()} have no definite parity")


def _state(label, alpha, energy):
    alpha = np.asarray(alpha, dtype=float)
    alpha.setflags(write=False)
    return ValleyState(label, alpha, parity_of(alpha), energy)


def manifold(epsilon: float, params: MaterialParams) -> LevelStructure:
    if not (0.0 <= epsilon < EPS_MAX):
        raise ValidationError(f"epsilon={epsilon} outside the validity range [0, {EPS_MAX})")
    a, b = singlet_coefficients(epsilon)
    w10 = omega10(epsilon, params)
    w21 = 2.0 * w10
    e1 = HBAR * w10
    e2 = HBAR * (w10 + w21)
    r2 = 1.0 / math.sqrt(2.0)
    states = (
        _state("S0", [0, 0, 0, 0, r2, -r2], 0.0),
        _state("S1", [b, b, b, b, a, a], e1),
        _state("S2", [0.5, 0.5, -0.5, -0.5, 0, 0], e2),
        _state("T_odd_a", [r2, -r2, 0, 0, 0, 0], e2),
        _state("T_odd_b", [0, 0, r2, -r2, 0, 0], e2),
    )
    return LevelStructure(epsilon, a, b, states, w10, w21)
