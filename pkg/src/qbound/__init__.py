"""Ergodicity bounds and limiting regimes for inhomogeneous queues with batch transitions."""

from .intensity import ConfigError, DomainError, ModelSpec, preset_case, time_function
from .dseq import DSequence, compute_W, geometric, s100_sequence
from .generator import build_A, build_reduced, transform_Bstar, check_positivity
from .bounds import analyze, periodic_constants, alpha_i, chi_i

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DomainError",
    "ModelSpec",
    "DSequence",
    "preset_case",
    "time_function",
    "compute_W",
    "geometric",
    "s100_sequence",
    "build_A",
    "build_reduced",
    "transform_Bstar",
    "check_positivity",
    "analyze",
    "periodic_constants",
    "alpha_i",
    "chi_i",
    "__version__",
]
