"""Multi-period fuel-efficiency dispatch via sum-of-ratios fractional
programming over a rotated-cone relaxation of AC power flow."""

from . import baseline, engine, fractional, netmodel, relaxation, socp
from ._kernels import USING_NUMBA
from .engine import DispatchSolution, SolverConfig, compare_models, solve_dispatch
from .netmodel import NetworkCase, load_case, parse_case, serialize_case, validate_case

__version__ = "0.1.0"

__all__ = [
    "baseline",
    "engine",
    "fractional",
    "netmodel",
    "relaxation",
    "socp",
    "USING_NUMBA",
    "NetworkCase",
    "SolverConfig",
    "DispatchSolution",
    "load_case",
    "parse_case",
    "serialize_case",
    "validate_case",
    "solve_dispatch",
    "compare_models",
    "__version__",
]
