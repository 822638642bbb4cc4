"""Estimators, exponent calculators and steering built on the simulator."""
from .estimators import (
    EstimateResult, TestFunction, coupling_bound_audit, ergodic_average, holder_fit, irreducibility_probe, mc_gap,
    mc_gaps,
)
from .exponents import beta_theory, epsilon_range
from .steering import steer_deterministic

__all__ = [
    "EstimateResult", "TestFunction", "beta_theory", "coupling_bound_audit", "epsilon_range", "ergodic_average",
    "holder_fit", "irreducibility_probe", "mc_gap", "mc_gaps", "steer_deterministic",
]
