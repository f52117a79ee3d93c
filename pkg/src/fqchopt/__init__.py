"""Spectral solver and optimal-control engine for fractional Cahn-Hilliard systems with
double-obstacle potential, approximated by deep-quench logarithmic potentials."""

__version__ = "0.1.0"

from .spectral import (ConfigurationError, Domain, EigenBasis, SpectralField, ZeroMeanField,
                       build_basis)
from .potentials import QuenchSchedule, SmoothPart
from .state import InitialState, ModelConfig, StateTrajectory, StepFailure, solve
from .adjoint import discrete_adjoint, solve_adjoint
from .optimize import (ControlConstraints, CostConfig, ReducedProblem, deep_quench_continuation,
                       projected_gradient)

__all__ = [
    "ConfigurationError",
    "Domain",
    "EigenBasis",
    "SpectralField",
    "ZeroMeanField",
    "build_basis",
    "QuenchSchedule",
    "SmoothPart",
    "InitialState",
    "ModelConfig",
    "StateTrajectory",
    "StepFailure",
    "solve",
    "solve_adjoint",
    "discrete_adjoint",
    "ControlConstraints",
    "CostConfig",
    "ReducedProblem",
    "projected_gradient",
    "deep_quench_continuation",
    "__version__",
]
