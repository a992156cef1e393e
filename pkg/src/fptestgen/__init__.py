"""Constraint-based generation of test cases that reach suspicious floating-point values."""

from .floats import BINARY32, MINI43, FloatFormat, FloatValue
from .frontend import concrete_eval, parse_interval, parse_program
from .interval import FpInterval
from .search import SolverConfig, SolveResult, generate_and_test, solve_program

__version__ = "0.1.0"

__all__ = [
    "BINARY32",
    "MINI43",
    "FloatFormat",
    "FloatValue",
    "FpInterval",
    "SolveResult",
    "SolverConfig",
    "concrete_eval",
    "generate_and_test",
    "parse_interval",
    "parse_program",
    "solve_program",
]
