"""Periodic uniform grids, scalar fields, and the spectral Helmholtz solve.

A field lives on the uniform periodic grid over the centered cube
[-L/2, L/2)^d with N points per axis. Array axes are ordered (y, x) in 2D
and (z, y, x) in 3D so that a C-order ravel enumerates x fastest; the binary
snapshot format stores exactly that linear order.

The discrete Laplacian is the central 5-point (2D) / 7-point (3D) stencil
with periodic wraparound. Its eigenvalues on the FFT basis,

    lambda(k) = sum_axes (2 cos(2 pi k_a / N) - 2) / h^2,

are precomputed on the grid ("symbol") and diagonalize the implicit solve
(I - alpha Lap) u = rhs exactly, so the spectral solve and the stencil are
the same operator by construction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, FormatError, StructuralError

SNAPSHOT_MAGIC = b"ACF1"


@dataclass(frozen=True)
class GridSpec:
    """Immutable description of a periodic uniform grid.

    ``symbol`` holds the stencil-Laplacian eigenvalue for every FFT mode,
    shaped like a field on this grid; all entries are <= 0 and the zero mode
    is exactly 0.
    """

    dim: int
    n: int
    length: float
    h: float
    symbol: np.ndarray

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays (x, y[, z]) for the grid points.

        x varies along the last array axis, y along the one before, z first.
        """
        pts = -0.5 * self.length + self.h * np.arange(self.n)
        out = []
        for a in range(self.dim):
            shape = [1] * self.dim
            shape[self.dim - 1 - a] = self.n
            out.append(pts.reshape(shape))
        return tuple(out)


@dataclass
class Field:
    """A scalar grid function: double-precision values on every grid point."""

    grid: GridSpec
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.data.shape != self.grid.shape:
            raise StructuralError(
                f"field data shape {self.data.shape} does not match grid {self.grid.shape}"
            )
        if self.data.dtype != np.float64:
            self.data = self.data.astype(np.float64)

    def copy(self) -> "Field":
        return Field(self.grid, self.data.copy())


def make_grid(dim: int, n: int, length: float) -> GridSpec:
    """Build a GridSpec, precomputing spacing and the Laplacian symbol."""
    if dim not in (2, 3):
        raise ConfigurationError(f"grid dim must be 2 or 3, got {dim}")
    if n < 4:
        raise ConfigurationError(f"grid needs at least 4 points per axis, got {n}")
    if length <= 0:
        raise ConfigurationError(f"domain length must be positive, got {length}")
    h = length / n
    modes = np.arange(n)
    lam1d = (2.0 * np.cos(2.0 * np.pi * modes / n) - 2.0) / (h * h)
    lam1d[0] = 0.0  # exact zero mode, avoids -0.0/rounding residue
    symbol = np.zeros((n,) * dim)
    for a in range(dim):
        shape = [1] * dim
        shape[a] = n
        symbol = symbol + lam1d.reshape(shape)
    symbol.flags.writeable = False
    return GridSpec(dim=dim, n=n, length=length, h=h, symbol=symbol)


def constant_field(grid: GridSpec, value: float) -> Field:
    return Field(grid, np.full(grid.shape, float(value)))


def laplacian_array(data: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Stencil Laplacian on the trailing ``grid.dim`` axes of ``data``.

    Accepts a plain field array or a stack of them (leading batch axes).
    """
    inv_h2 = 1.0 / (grid.h * grid.h)
    ndim = data.ndim
    out = (-2.0 * grid.dim) * data
    for a in range(ndim - grid.dim, ndim):
        out += np.roll(data, 1, axis=a)
        out += np.roll(data, -1, axis=a)
    out *= inv_h2
    return out


def laplacian(u: Field) -> Field:
    """Central-difference Laplacian with periodic wraparound."""
    return Field(u.grid, laplacian_array(u.data, u.grid))


def helmholtz_solve_array(rhs: np.ndarray, grid: GridSpec, alpha: float) -> np.ndarray:
    """Solve (I - alpha*Lap) u = rhs via the precomputed stencil symbol."""
    if alpha < 0:
        raise ConfigurationError(f"helmholtz solve requires alpha >= 0, got {alpha}")
    if alpha == 0.0:
        return rhs.copy()
    axes = tuple(range(rhs.ndim - grid.dim, rhs.ndim))
    half = grid.symbol[..., : grid.n // 2 + 1]
    rhs_hat = sfft.rfftn(rhs, axes=axes)
    rhs_hat /= 1.0 - alpha * half
    return sfft.irfftn(rhs_hat, s=grid.shape, axes=axes)


def helmholtz_solve(rhs: Field, alpha: float) -> Field:
    """Invert the implicit Helmholtz-type operator of the time stepper."""
    return Field(rhs.grid, helmholtz_solve_array(rhs.data, rhs.grid, alpha))


def sup_norm(data: np.ndarray) -> float:
    return float(np.max(np.abs(data)))


def write_field(u: Field, path) -> None:
    """Write the binary snapshot: magic, u32 dim, u32 n, f64 length, payload.

    Everything little-endian; payload is the raw C-order (x fastest) float64
    values, so a read-back is bit-exact.
    """
    header = SNAPSHOT_MAGIC + struct.pack("<IId", u.grid.dim, u.grid.n, u.grid.length)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(u.data, dtype="<f8").tobytes())


def read_field(path) -> Field:
    """Read a snapshot written by :func:`write_field`, rebuilding its grid."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:4] != SNAPSHOT_MAGIC:
        raise FormatError(f"{path}: not a field snapshot (bad magic)")
    dim, n, length = struct.unpack("<IId", raw[4:20])
    grid = make_grid(dim, n, length)
    payload = raw[20:]
    expected = grid.size * 8
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected}"
        )
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(grid.shape)
    return Field(grid, data)
