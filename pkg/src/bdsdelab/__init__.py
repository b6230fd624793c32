"""Numerical lab for infinite-horizon backward doubly stochastic equations and their SPDEs."""

__version__ = "0.1.0"

from .conditions import ProblemConstants, validate_conditions
from .errors import (
    ConfigError,
    DegenerateInputError,
    NonConvergenceError,
    NumericalError,
    NumericalOverflowError,
    ParameterError,
    PreconditionError,
)
from .finite import DriverSpec, FieldPath, SolveReport, march_solve, picard_solve, solve_linear_bdsde
from .forward import ForwardCoefficients, euler_step, simulate_flow
from .infinite import solve_infinite
from .noise import NoiseGrid, NoiseSpectrum, reverse, sample_noise, shift
from .weighted import FieldSnapshot, SpatialGrid, WeightSpec

__all__ = [
    "ConfigError",
    "DegenerateInputError",
    "DriverSpec",
    "FieldPath",
    "FieldSnapshot",
    "ForwardCoefficients",
    "NoiseGrid",
    "NoiseSpectrum",
    "NonConvergenceError",
    "NumericalError",
    "NumericalOverflowError",
    "ParameterError",
    "PreconditionError",
    "ProblemConstants",
    "SolveReport",
    "SpatialGrid",
    "WeightSpec",
    "euler_step",
    "march_solve",
    "picard_solve",
    "reverse",
    "sample_noise",
    "shift",
    "simulate_flow",
    "solve_infinite",
    "solve_linear_bdsde",
    "validate_conditions",
]
