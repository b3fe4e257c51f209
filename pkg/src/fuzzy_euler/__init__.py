"""Pseudo-spectral laboratory for damped Euler flows with a nonlocal (fuzzy) pressure."""

from .errors import ConfigError, FuzzyEulerError, IntegrityError, PositivityError, StepSizeError
from .hydro import PressureLaw, SimState, SolverConfig, run, step
from .initial_data import InitialData
from .kernels import KernelFamily, TriangleKernel, symbol_K, symbol_L, verify_hypotheses
from .littlewood_paley import besov_norm, lp_block
from .spectral import GridSpec, SpectralField

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "FuzzyEulerError",
    "GridSpec",
    "InitialData",
    "IntegrityError",
    "KernelFamily",
    "PositivityError",
    "PressureLaw",
    "SimState",
    "SolverConfig",
    "SpectralField",
    "StepSizeError",
    "TriangleKernel",
    "besov_norm",
    "lp_block",
    "run",
    "step",
    "symbol_K",
    "symbol_L",
    "verify_hypotheses",
]
