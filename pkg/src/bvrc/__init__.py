"""Catching-up solvers for evolution inclusions driven by a mixed measure.

The trajectory ``u`` is of bounded variation and right continuous; it solves
``-du/dnu in A(t) u + f`` with ``nu = lambda + dr``.  Atoms of ``dr`` make
the solution jump through a single resolvent step.
"""

from .catching_up import BvrcTrajectory, SolveReport, evaluate, march, solve
from .errors import (
    BvrcError,
    CapabilityError,
    ConsistencyError,
    DegenerateParametersError,
    DomainError,
    HypothesisError,
    InfeasibleSetError,
    NonConvergenceError,
    OperatorError,
    QuadratureError,
    SelectionError,
)
from .measures import AdaptedPartition, MixedMeasure, VariationFunction, build_partition, nu_mass, refine
from .monotone import Ball, Box, Halfspace, Intersection, moving_normal_cone, psd_linear, resolvent

__version__ = "0.1.0"

__all__ = [
    "AdaptedPartition",
    "Ball",
    "Box",
    "BvrcError",
    "BvrcTrajectory",
    "CapabilityError",
    "ConsistencyError",
    "DegenerateParametersError",
    "DomainError",
    "Halfspace",
    "HypothesisError",
    "InfeasibleSetError",
    "Intersection",
    "MixedMeasure",
    "NonConvergenceError",
    "OperatorError",
    "QuadratureError",
    "SelectionError",
    "SolveReport",
    "VariationFunction",
    "build_partition",
    "evaluate",
    "march",
    "moving_normal_cone",
    "nu_mass",
    "psd_linear",
    "refine",
    "resolvent",
    "solve",
]
