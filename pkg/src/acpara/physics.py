"""Allen-Cahn model definitions.

Covers the double-well nonlinearity f(u) = u - u^3 and its potential, the
nonlocal mean-of-f term that turns the classic equation into the
mass-conservative variant, total mass, the discrete free energy, the
benchmark initial conditions, and the relative-L2 error metric used to
compare trajectories.

Solutions of the classic equation obey the maximum bound principle with
bounds [-1, 1]; the mass-conservative variant stays within
[-2*sqrt(3)/3, 2*sqrt(3)/3].
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigurationError, StructuralError
from .grid import Field, GridSpec

MASS_BOUND = 2.0 * math.sqrt(3.0) / 3.0

# The lobed star level set used as the 3D benchmark start; smooths into a
# ball under the flow. Recorded in run metadata because it is a convention
# of this package, not a universal definition.
STAR_FORMULA = "u0 = tanh((0.25 + 0.1*cos(6*theta)*sin(phi)**3 - r) / eps)"


class ModelKind(enum.Enum):
    CLASSIC = "classic"
    MASS_CONSERVATIVE = "mass"

    @staticmethod
    def parse(text: str) -> "ModelKind":
        for kind in ModelKind:
            if kind.value == text:
                return kind
        raise ConfigurationError(f"unknown model kind {text!r} (expected classic|mass)")


def bounds_for(kind: ModelKind) -> tuple[float, float]:
    if kind is ModelKind.CLASSIC:
        return (-1.0, 1.0)
    return (-MASS_BOUND, MASS_BOUND)


@dataclass(frozen=True)
class PhysicsParams:
    """Model kind, interfacial width, and the matching solution bounds."""

    kind: ModelKind
    epsilon: float
    bounds: tuple[float, float] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        expected = bounds_for(self.kind)
        if self.bounds is None:
            object.__setattr__(self, "bounds", expected)
        elif tuple(self.bounds) != expected:
            raise ConfigurationError(
                f"bounds {self.bounds} do not match kind {self.kind.value} (expected {expected})"
            )


def f_nonlinear(u):
    """Double-well reaction term u - u^3 (scalar or elementwise on arrays)."""
    return u - u * u * u


def f_nonlinear_prime(u):
    """Derivative 1 - 3u^2, needed by residual linearizations."""
    return 1.0 - 3.0 * u * u


def potential_density(u):
    """Double-well potential F(u) = (u^2 - 1)^2 / 4."""
    w = u * u - 1.0
    return 0.25 * w * w


def nonlocal_g(u: Field, params: PhysicsParams) -> float:
    """Grid mean of f over all points; identically 0 for the classic model."""
    if params.kind is ModelKind.CLASSIC:
        return 0.0
    return float(np.mean(f_nonlinear(u.data)))


def total_mass(u: Field) -> float:
    """Discrete total mass h^dim * sum(u)."""
    return float(u.grid.h**u.grid.dim * np.sum(u.data))


def gradient_sq_array(data: np.ndarray, grid: GridSpec) -> np.ndarray:
    """|forward-difference gradient|^2 with periodic wrap, per grid point."""
    out = np.zeros_like(data)
    for a in range(data.ndim - grid.dim, data.ndim):
        d = (np.roll(data, -1, axis=a) - data) / grid.h
        out += d * d
    return out


def discrete_energy(u: Field, params: PhysicsParams) -> float:
    """Free energy h^dim * sum( eps^2/2 |grad u|^2 + F(u) ).

    The gradient uses forward differences; only monotone decay along
    trajectories is asserted anywhere, never absolute values.
    """
    dens = 0.5 * params.epsilon**2 * gradient_sq_array(u.data, u.grid)
    dens += potential_density(u.data)
    return float(u.grid.h**u.grid.dim * np.sum(dens))


def ic_bubbles(grid: GridSpec, eps: float) -> Field:
    """Two tanh bubbles of radius 0.2 centered at (+-0.14, 0); 2D only."""
    if grid.dim != 2:
        raise ConfigurationError("bubble-merging initial condition is 2D only")
    x, y = grid.coords()
    right = np.tanh((0.2 - np.sqrt((x - 0.14) ** 2 + y**2)) / eps)
    left = np.tanh((0.2 - np.sqrt((x + 0.14) ** 2 + y**2)) / eps)
    return Field(grid, np.maximum(right, left))


def ic_random(grid: GridSpec, amplitude: float, seed: int) -> Field:
    """I.i.d. uniform values in [-amplitude, amplitude) from the documented
    counter-based stream; the same seed always reproduces the same field."""
    if amplitude <= 0:
        raise ConfigurationError(f"random IC amplitude must be positive, got {amplitude}")
    values = rng.symmetric_uniform(seed, grid.size, amplitude)
    return Field(grid, values.reshape(grid.shape))


def ic_star(grid: GridSpec, eps: float) -> Field:
    """Six-lobed star level set with a tanh profile; 3D only.

    Radius of the level set in spherical angles about the domain center:
    r0(theta, phi) = 0.25 + 0.1 cos(6 theta) sin^3(phi). See STAR_FORMULA.
    """
    if grid.dim != 3:
        raise ConfigurationError("star initial condition is 3D only")
    x, y, z = grid.coords()
    r = np.sqrt(x**2 + y**2 + z**2)
    rho = np.sqrt(x**2 + y**2)
    theta = np.arctan2(y, x)
    with np.errstate(invalid="ignore", divide="ignore"):
        sin_phi = np.where(r > 0, rho / np.where(r > 0, r, 1.0), 0.0)
    r0 = 0.25 + 0.1 * np.cos(6.0 * theta) * sin_phi**3
    return Field(grid, np.tanh((r0 - r) / eps))


def rel_l2_error(u: Field, ref: Field, *, return_flag: bool = False):
    """Relative L2 distance ||u - ref|| / ||ref|| over the raw grid vectors.

    When the reference norm is zero the absolute norm is returned instead;
    ``return_flag=True`` additionally reports whether that fallback fired.
    """
    if u.grid.shape != ref.grid.shape:
        raise StructuralError(
            f"grid mismatch: {u.grid.shape} vs {ref.grid.shape}"
        )
    diff = float(np.linalg.norm((u.data - ref.data).ravel()))
    denom = float(np.linalg.norm(ref.data.ravel()))
    absolute = denom == 0.0
    err = diff if absolute else diff / denom
    if return_flag:
        return err, absolute
    return err
