"""Planar fronts of reaction-diffusion-advection systems and their transverse stability."""
from .equilibria import check_equilibrium_stability, dispersion_coefficients
from .front import FrontProfile, build_initial_guess, continue_front, solve_front_bvp
from .kinetics import KlausmeierModel, FunctionModel, ReactionModel, SteadyState, get_model
from .singular import (
    asymptotic_lambda2,
    classify_regime,
    critical_advection,
    reduced_slow_orbits,
    solve_layer_front,
    weighted_integrals,
)
from .spectral import lambda_c2_exact, lambda_c2_oracle, solve_adjoint, zero_contour

__version__ = "0.1.0"

__all__ = [
    "KlausmeierModel",
    "FunctionModel",
    "ReactionModel",
    "SteadyState",
    "get_model",
    "dispersion_coefficients",
    "check_equilibrium_stability",
    "classify_regime",
    "solve_layer_front",
    "weighted_integrals",
    "reduced_slow_orbits",
    "asymptotic_lambda2",
    "critical_advection",
    "FrontProfile",
    "build_initial_guess",
    "solve_front_bvp",
    "continue_front",
    "solve_adjoint",
    "lambda_c2_exact",
    "lambda_c2_oracle",
    "zero_contour",
]
