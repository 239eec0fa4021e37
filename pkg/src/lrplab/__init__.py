"""Simulation lab for critical long-range percolation on the integers.

Samples percolation environments, measures electrical and random-walk
observables on them, and fits the scaling exponents that tie the two
together: resistance growth Lambda(n) ~ n^delta and return probability
decay with spectral dimension 2/(1 + delta).
"""

__version__ = "0.1.0"

from .config import ExperimentConfig
from .errors import (
    BoundaryContactError,
    ConfigurationError,
    InvariantViolation,
    NumericValidityError,
)
from .model import (
    Environment,
    LazyEnvironment,
    ModelParams,
    bridging_statistics,
    centered_window,
    edge_probability,
    mean_degree,
    sample_environment,
)
from .resistance import (
    assemble,
    build_ball,
    lambda_hat,
    point_to_set,
    resistance_profile,
)
from .scaling import (
    ScalingFunctions,
    dyadic_chain_check,
    estimate_delta,
    exit_time_exponent,
    fit_power_law,
    good_radius_frequency,
    spectral_dimension_annealed,
    spectral_dimension_quenched,
    tail_curve,
)
from .walk import evolve_heat_kernel, expected_exit_time, mc_walk

__all__ = [
    "__version__",
    "BoundaryContactError",
    "ConfigurationError",
    "Environment",
    "ExperimentConfig",
    "InvariantViolation",
    "LazyEnvironment",
    "ModelParams",
    "NumericValidityError",
    "ScalingFunctions",
    "assemble",
    "bridging_statistics",
    "build_ball",
    "centered_window",
    "dyadic_chain_check",
    "edge_probability",
    "estimate_delta",
    "evolve_heat_kernel",
    "exit_time_exponent",
    "expected_exit_time",
    "fit_power_law",
    "good_radius_frequency",
    "lambda_hat",
    "mc_walk",
    "mean_degree",
    "point_to_set",
    "resistance_profile",
    "sample_environment",
    "spectral_dimension_annealed",
    "spectral_dimension_quenched",
    "tail_curve",
]
