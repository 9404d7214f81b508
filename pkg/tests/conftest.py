"""Shared oracles and helpers.

The dense-matrix constructions here are deliberately independent of the
package's FFT/stencil code paths: they assemble the periodic Laplacian
explicitly (Kronecker products of 1D circulant tridiagonals) in the same
x-fastest linearization the fields use, and solve linear systems with
dense LU. Tests compare the fast implementations against these.
"""

import numpy as np
import pytest
import scipy.linalg

from acpara.grid import Field, GridSpec, make_grid
from acpara.physics import ModelKind, PhysicsParams, f_nonlinear


def dense_laplacian_matrix(grid: GridSpec) -> np.ndarray:
    """Periodic central-difference Laplacian as an explicit matrix."""
    n = grid.n
    t = np.zeros((n, n))
    for i in range(n):
        t[i, i] = -2.0
        t[i, (i + 1) % n] = 1.0
        t[i, (i - 1) % n] = 1.0
    t /= grid.h**2
    eye = np.eye(n)
    if grid.dim == 2:
        # linear index j*n + i (x fastest): x term acts on the fast index
        return np.kron(eye, t) + np.kron(t, eye)
    return (
        np.kron(eye, np.kron(eye, t))
        + np.kron(eye, np.kron(t, eye))
        + np.kron(t, np.kron(eye, eye))
    )


def dense_cn_step(u0: np.ndarray, grid: GridSpec, cfg) -> np.ndarray:
    """Dense-linear-algebra Picard oracle for one Crank-Nicolson step.

    Uses the explicitly assembled stencil matrix and LU solves; mirrors the
    lagged-nonlinearity iteration and its stopping rule, nothing else shared
    with the production path.
    """
    phys = cfg.physics
    lap = dense_laplacian_matrix(grid)
    alpha = 0.5 * cfg.dt * phys.epsilon**2
    system = np.eye(grid.size) - alpha * lap
    lu = scipy.linalg.lu_factor(system)

    def g_mean(v):
        if phys.kind is ModelKind.CLASSIC:
            return 0.0
        return np.mean(f_nonlinear(v))

    flat = u0.ravel()
    base = flat + 0.5 * cfg.dt * (phys.epsilon**2 * (lap @ flat) + f_nonlinear(flat) - g_mean(flat))
    current = flat.copy()
    for _ in range(cfg.picard_max_iter):
        rhs = base + 0.5 * cfg.dt * (f_nonlinear(current) - g_mean(current))
        new = scipy.linalg.lu_solve(lu, rhs)
        if np.max(np.abs(new - current)) < cfg.picard_tol:
            return new.reshape(grid.shape)
        current = new
    raise AssertionError("dense Picard oracle did not converge")


def random_field(grid: GridSpec, seed: int, scale: float = 1.0) -> Field:
    rng = np.random.default_rng(seed)
    return Field(grid, scale * rng.standard_normal(grid.shape))


@pytest.fixture
def grid2d_small() -> GridSpec:
    return make_grid(2, 8, 1.0)


@pytest.fixture
def grid2d() -> GridSpec:
    return make_grid(2, 32, 1.0)


@pytest.fixture
def grid3d_small() -> GridSpec:
    return make_grid(3, 6, 1.0)


@pytest.fixture
def classic() -> PhysicsParams:
    return PhysicsParams(ModelKind.CLASSIC, 0.1)


@pytest.fixture
def conservative() -> PhysicsParams:
    return PhysicsParams(ModelKind.MASS_CONSERVATIVE, 0.1)
