"""Fine propagator: Crank-Nicolson stepping solved by Picard iteration.

One step advances U_n to U_{n+1} satisfying

    U_{n+1} - U_n = dt/2 * ( eps^2 Lap (U_{n+1} + U_n)
                             + f(U_{n+1}) + f(U_n) - g(U_{n+1}) - g(U_n) )

where g(v) is the grid mean of f(v) for the mass-conservative model and 0
for the classic one. Summing over the grid shows the g terms cancel the f
terms exactly, so the grid sum of U is conserved step to step (up to
rounding) in the mass-conservative case.

The Picard loop lags the nonlinear terms: starting from U^(0) = U_n, each
sweep solves the linear system (I - dt/2 eps^2 Lap) U^(m+1) = rhs(U^(m))
spectrally and stops once successive iterates agree in sup norm.

``scheme_residual`` evaluates the same relation as a residual; the network
training loss is built on it, which ties the surrogate to this solver by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NonConvergenceError
from .grid import Field, GridSpec, helmholtz_solve_array, laplacian_array, sup_norm, write_field
from .physics import (
    ModelKind,
    PhysicsParams,
    discrete_energy,
    f_nonlinear,
    f_nonlinear_prime,
    total_mass,
)


@dataclass(frozen=True)
class StepperConfig:
    """Time step, physics, and the Picard stopping rule."""

    dt: float
    physics: PhysicsParams
    picard_tol: float = 1e-12
    picard_max_iter: int = 100

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.picard_tol <= 0:
            raise ConfigurationError(f"picard_tol must be positive, got {self.picard_tol}")
        if self.picard_max_iter < 1:
            raise ConfigurationError("picard_max_iter must be at least 1")


def _mean_axes(grid: GridSpec, data: np.ndarray):
    return tuple(range(data.ndim - grid.dim, data.ndim))


def _nonlocal_mean(data: np.ndarray, grid: GridSpec, kind: ModelKind):
    """Per-field grid mean of f; keeps leading batch axes, 0 for classic."""
    if kind is ModelKind.CLASSIC:
        return 0.0
    return np.mean(f_nonlinear(data), axis=_mean_axes(grid, data), keepdims=True)


def cn_step_array(data: np.ndarray, grid: GridSpec, cfg: StepperConfig) -> tuple[np.ndarray, int]:
    """One Crank-Nicolson step on a raw array; returns (result, picard_iters)."""
    phys = cfg.physics
    eps2 = phys.epsilon**2
    half_dt = 0.5 * cfg.dt
    alpha = half_dt * eps2

    f_n = f_nonlinear(data)
    base = data + half_dt * (eps2 * laplacian_array(data, grid) + f_n - _nonlocal_mean(data, grid, phys.kind))

    current = data
    for m in range(cfg.picard_max_iter):
        rhs = base + half_dt * (f_nonlinear(current) - _nonlocal_mean(current, grid, phys.kind))
        new = helmholtz_solve_array(rhs, grid, alpha)
        increment = sup_norm(new - current)
        current = new
        if increment < cfg.picard_tol:
            return current, m + 1
    raise NonConvergenceError(
        f"Picard iteration did not reach {cfg.picard_tol} within "
        f"{cfg.picard_max_iter} sweeps (last increment {increment:.3e})",
        last_increment=increment,
    )


def cn_step(u: Field, cfg: StepperConfig) -> Field:
    """Advance a field by one Crank-Nicolson step."""
    data, _ = cn_step_array(u.data, u.grid, cfg)
    return Field(u.grid, data)


def substep_count(t_start: float, t_end: float, dt: float) -> int:
    """Number of dt substeps spanning [t_start, t_end]; must divide evenly."""
    if t_end <= t_start:
        raise ConfigurationError(f"time interval must be forward, got [{t_start}, {t_end}]")
    ratio = (t_end - t_start) / dt
    count = round(ratio)
    if count < 1 or abs(ratio - count) > 1e-9:
        raise ConfigurationError(
            f"interval [{t_start}, {t_end}] is not an integer multiple of dt={dt} (ratio {ratio})"
        )
    return count


def fine_propagate(u: Field, t_start: float, t_end: float, cfg: StepperConfig) -> Field:
    """The fine propagator: compose cn_step over every substep of the slice."""
    data = u.data
    for _ in range(substep_count(t_start, t_end, cfg.dt)):
        data, _ = cn_step_array(data, u.grid, cfg)
    return Field(u.grid, data)


def scheme_residual_array(
    u_next: np.ndarray, u_prev: np.ndarray, grid: GridSpec, cfg: StepperConfig
) -> np.ndarray:
    """Residual of the fully discrete step at (u_prev -> u_next); zero iff
    u_next solves the scheme. Supports leading batch axes."""
    phys = cfg.physics
    half_dt = 0.5 * cfg.dt
    rhs = phys.epsilon**2 * laplacian_array(u_next + u_prev, grid)
    rhs += f_nonlinear(u_next) + f_nonlinear(u_prev)
    if phys.kind is ModelKind.MASS_CONSERVATIVE:
        rhs -= _nonlocal_mean(u_next, grid, phys.kind) + _nonlocal_mean(u_prev, grid, phys.kind)
    return u_next - u_prev - half_dt * rhs


def scheme_residual(u_next: Field, u_prev: Field, cfg: StepperConfig) -> Field:
    return Field(u_next.grid, scheme_residual_array(u_next.data, u_prev.data, u_next.grid, cfg))


def scheme_residual_vjp_next(
    u_next: np.ndarray, w: np.ndarray, grid: GridSpec, cfg: StepperConfig
) -> np.ndarray:
    """Adjoint of the residual's Jacobian w.r.t. u_next applied to w.

    (J^T w) = w - dt/2 ( eps^2 Lap w + f'(u_next) w - f'(u_next) mean(w) ),
    the mean term appearing only for the mass-conservative model.
    """
    phys = cfg.physics
    half_dt = 0.5 * cfg.dt
    fp = f_nonlinear_prime(u_next)
    inner = phys.epsilon**2 * laplacian_array(w, grid) + fp * w
    if phys.kind is ModelKind.MASS_CONSERVATIVE:
        inner -= fp * np.mean(w, axis=_mean_axes(grid, w), keepdims=True)
    return w - half_dt * inner


def reference_run(
    u0: Field,
    t_final: float,
    cfg: StepperConfig,
    snapshot_every: int = 100,
    out_dir=None,
) -> list[tuple[int, Field]]:
    """Sequential integration keeping (and optionally writing) snapshots.

    Returns [(step_index, field), ...] including step 0 and the final step.
    With ``out_dir`` set, writes ``t<step>.acf`` snapshots plus a
    ``diagnostics.csv`` with step, time, mass, energy, picard_iters rows.
    """
    if snapshot_every < 1:
        raise ConfigurationError("snapshot_every must be at least 1")
    n_steps = 0 if t_final == 0 else substep_count(0.0, t_final, cfg.dt)

    rows = []
    snapshots: list[tuple[int, Field]] = [(0, u0)]
    current = u0
    rows.append((0, 0.0, total_mass(current), discrete_energy(current, cfg.physics), 0))
    for step in range(1, n_steps + 1):
        data, iters = cn_step_array(current.data, current.grid, cfg)
        current = Field(current.grid, data)
        rows.append(
            (step, step * cfg.dt, total_mass(current), discrete_energy(current, cfg.physics), iters)
        )
        if step % snapshot_every == 0 or step == n_steps:
            snapshots.append((step, current))

    if out_dir is not None:
        import csv
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for step, field in snapshots:
            write_field(field, out / f"t{step:06d}.acf")
        with open(out / "diagnostics.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "time", "mass", "energy", "picard_iters"])
            writer.writerows(rows)
    return snapshots
