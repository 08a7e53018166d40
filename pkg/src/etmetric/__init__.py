"""Entropy-Transport distances between finite metric measure spaces.

Measure-level distances live in :mod:`etmetric.et_solver`; the distances
between spaces, minimized over metric couplings, live in
:mod:`etmetric.sturm`; cone constructions in :mod:`etmetric.conic`.
"""

__version__ = "0.1.0"

from .entropy import CostFunction, DomainError, EntropyFunction, marginal_perspective
from .mmspace import (Coupling, CrossDistanceMatrix, MetricMeasureSpace, StructuralError,
                      validate_cross_distance, validate_metric)
from .presets import Preset, parse_preset
from .et_solver import EtOptions, EtProblem, EtSolution, et_distance, solve_et
from .sturm import SturmOptions, SturmProblem, SturmSolution, sturm_distance

__all__ = [
    "CostFunction", "Coupling", "CrossDistanceMatrix", "DomainError", "EntropyFunction",
    "EtOptions", "EtProblem", "EtSolution", "MetricMeasureSpace", "Preset", "StructuralError",
    "SturmOptions", "SturmProblem", "SturmSolution", "et_distance", "marginal_perspective",
    "parse_preset", "solve_et", "sturm_distance", "validate_cross_distance", "validate_metric",
]
