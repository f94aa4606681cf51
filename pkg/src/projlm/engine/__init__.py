"""Simulation engine: counter-based innovations, compiled coefficient
recursions, projection and filtering, and path serialization."""

from projlm.engine.simulate import (
    FilteredSlices,
    Path,
    coefficient_slice,
    linear_filter,
    project,
    simulate,
)
from projlm.engine.stream import InnovationStream

__all__ = [
    "FilteredSlices",
    "InnovationStream",
    "Path",
    "coefficient_slice",
    "linear_filter",
    "project",
    "simulate",
]
