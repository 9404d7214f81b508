"""Parallel-in-time solver for the classic and mass-conservative Allen-Cahn
equations.

The fine propagator is a Crank-Nicolson scheme solved by Picard iteration on
a periodic grid; the coarse propagator is a small convolutional network with
circular padding, trained self-supervised against the residual of the same
fully discrete scheme. Both are combined by the parareal iteration, which
converges to the fine trajectory in at most one iteration per time slice.
"""

from .errors import (
    ConfigurationError,
    DivergenceError,
    FormatError,
    NonConvergenceError,
    StructuralError,
)
from .grid import Field, GridSpec, helmholtz_solve, laplacian, make_grid, read_field, write_field
from .physics import ModelKind, PhysicsParams

__all__ = [
    "ConfigurationError",
    "DivergenceError",
    "Field",
    "FormatError",
    "GridSpec",
    "ModelKind",
    "NonConvergenceError",
    "PhysicsParams",
    "StructuralError",
    "helmholtz_solve",
    "laplacian",
    "make_grid",
    "read_field",
    "write_field",
]

__version__ = "0.1.0"
