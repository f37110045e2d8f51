"""Hybrid static/recommendation-driven type inference for Python source."""

from .api import build_program, infer_source, make_solver
from .solver import Assignments, InferenceConfig, Solver

__version__ = "0.1.0"

__all__ = [
    "Assignments",
    "InferenceConfig",
    "Solver",
    "build_program",
    "infer_source",
    "make_solver",
    "__version__",
]
