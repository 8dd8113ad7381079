"""Stress-tuned lithium donor qubits in silicon.

Valley-orbit levels under <001> compression, phonon decay rates, elastic
donor-donor couplings, stress-pulse control and a small dense Lindblad
simulator, with brute-force oracles for the closed-form results.
"""

__version__ = "0.1.0"

from .units import ConfigurationError, MaterialParams, ValidationError, load_config
from .levels import LevelStructure, epsilon_from_stress, manifold, stress_from_epsilon
from .phonons import QuadSettings, decay_rate_10_oracle, decay_rate_21, decay_rate_closed_form_10
from .coupling import ising_coupling, ret_coupling_10, ret_coupling_21
from .pulses import Pulse, PulseSchedule, parse_schedule
from .dynamics import build_register, evolve, gate_fidelity
from .operating import operating_temperature, quality_three_level, quality_two_level, sweep
from .oracles import OracleReport, default_suite

__all__ = [
    "ConfigurationError", "MaterialParams", "ValidationError", "load_config",
    "LevelStructure", "epsilon_from_stress", "manifold", "stress_from_epsilon",
    "QuadSettings", "decay_rate_10_oracle", "decay_rate_21", "decay_rate_closed_form_10",
    "ising_coupling", "ret_coupling_10", "ret_coupling_21",
    "Pulse", "PulseSchedule", "parse_schedule",
    "build_register", "evolve", "gate_fidelity",
    "operating_temperature", "quality_three_level", "quality_two_level", "sweep",
    "OracleReport", "default_suite",
]
