"""Spectral-Galerkin lab for monotone SPDEs with multiplicative noise.

Porous-medium and fast-diffusion equations on the unit box are truncated to
finitely many Dirichlet eigenmodes and integrated by drift-implicit
Euler-Maruyama. Coupling by change of measure, Monte Carlo gap estimators
and deterministic steering probe strong Feller, Hölder and irreducibility
properties of the resulting semigroups.
"""
from .conditions import ConditionReport, ConditionSampler, check_conditions
from .coupling import CouplingConfig, CouplingOutcome, coupled_step, run_coupling, run_couplings
from .integrator import NoiseIncrement, StepperConfig, convergence_probe, simulate_ensemble, simulate_path, step
from .models import ModelSpec, NoiseSpec, drift, hs_norm_diff, noise_apply, noise_diag, tilde_b_inverse
from .spectral import SpaceConfig, eigen_spectrum, functional_mu, norm, transform

__version__ = "1.0.0"

__all__ = [
    "ConditionReport", "ConditionSampler", "CouplingConfig", "CouplingOutcome", "ModelSpec", "NoiseIncrement",
    "NoiseSpec", "SpaceConfig", "StepperConfig", "check_conditions", "convergence_probe", "coupled_step", "drift",
    "eigen_spectrum", "functional_mu", "hs_norm_diff", "noise_apply", "noise_diag", "norm", "run_coupling",
    "run_couplings", "simulate_ensemble", "simulate_path", "step", "tilde_b_inverse", "transform",
]
