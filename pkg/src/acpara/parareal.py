"""Parareal iteration over time slices with parallel fine sweeps.

Iteration k refines trajectory slices with the correction

    U[n+1] <- coarse(U_new[n]) + fine(U_old[n]) - coarse(U_old[n])

where the fine solves over all pending slices are independent and run on a
worker pool, while the correction sweep is sequential in n because each
update needs the freshly corrected left neighbor. Slices with index < k are
already exact copies of the sequential fine trajectory and stay frozen,
which is what makes the method finish in at most one iteration per slice:
since the coarse propagator is deterministic, its two evaluations on
bitwise-equal states cancel exactly and slice k becomes the pure fine result.

Coarse evaluations on the current iterate are cached and reused as the
"previous iterate" term of the next iteration, so each slice costs one
coarse and one fine evaluation per iteration, matching the cost model in
``speedup_model``.
"""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .fine import StepperConfig, cn_step, fine_propagate
from .grid import Field, sup_norm
from .physics import rel_l2_error

WORKERS_ENV_VAR = "ACPARA_WORKERS"


@dataclass(frozen=True)
class PararealConfig:
    """Slice count, step sizes, stopping rule, and worker-pool width."""

    slices: int
    dt_coarse: float
    dt_fine: float
    tol: float = 1e-6
    max_iter: int | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.slices < 1:
            raise ConfigurationError("need at least one time slice")
        if self.dt_coarse <= 0 or self.dt_fine <= 0:
            raise ConfigurationError("step sizes must be positive")
        ratio = self.dt_coarse / self.dt_fine
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigurationError(
                f"dt_coarse/dt_fine = {ratio} must be a positive integer"
            )
        if self.max_iter is None:
            object.__setattr__(self, "max_iter", self.slices)
        if not 1 <= self.max_iter <= self.slices:
            raise ConfigurationError(
                f"max_iter must lie in [1, slices={self.slices}], got {self.max_iter}"
            )
        if self.tol < 0:
            raise ConfigurationError("tol must be non-negative")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")

    @property
    def substeps(self) -> int:
        return round(self.dt_coarse / self.dt_fine)

    @property
    def t_final(self) -> float:
        return self.slices * self.dt_coarse


@dataclass
class IterationStats:
    k: int
    sup_increment: float
    rel_l2_vs_fine: float | None
    t_coarse_s: float
    t_fine_s: float
    t_wall_s: float


@dataclass
class PararealTrace:
    """Per-iteration increments, errors, and timings for one run."""

    iterations: list[IterationStats] = field(default_factory=list)
    converged: bool = False
    coarse_error_vs_fine: float | None = None  # "k=0" error of the pure coarse sweep

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "sup_increment", "rel_l2_vs_fine", "t_coarse_s", "t_fine_s", "t_wall_s"])
            if self.coarse_error_vs_fine is not None:
                writer.writerow([0, "", f"{self.coarse_error_vs_fine:.16e}", "", "", ""])
            for it in self.iterations:
                writer.writerow([
                    it.k,
                    f"{it.sup_increment:.16e}",
                    "" if it.rel_l2_vs_fine is None else f"{it.rel_l2_vs_fine:.16e}",
                    f"{it.t_coarse_s:.6f}",
                    f"{it.t_fine_s:.6f}",
                    f"{it.t_wall_s:.6f}",
                ])


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV_VAR)
    if value is None:
        return 1
    try:
        workers = int(value)
    except ValueError as exc:
        raise ConfigurationError(f"{WORKERS_ENV_VAR}={value!r} is not an integer") from exc
    if workers < 1:
        raise ConfigurationError(f"{WORKERS_ENV_VAR} must be at least 1")
    return workers


@dataclass(frozen=True)
class FinePropagator:
    """Fine solve across one coarse interval (autonomous, so time-shift free)."""

    stepper: StepperConfig
    dt_coarse: float

    def __call__(self, u: Field) -> Field:
        return fine_propagate(u, 0.0, self.dt_coarse, self.stepper)


def _apply(propagator, u: Field) -> Field:
    return propagator(u)


def parallel_map(fn, items: list, workers: int) -> list:
    """Order-preserving map; results are independent of the worker count.

    Tasks run in separate processes (numerics release no work to threads
    under the GIL); any task failure propagates and aborts the batch.
    """
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(_apply, [fn] * len(items), items, chunksize=1))


def coarse_sweep(u0: Field, slices: int, coarse) -> list[Field]:
    """Sequential coarse rollout: [u0, G(u0), G(G(u0)), ...]."""
    if slices < 1:
        raise ConfigurationError("need at least one slice")
    trajectory = [u0]
    for _ in range(slices):
        trajectory.append(coarse(trajectory[-1]))
    return trajectory


def converged(prev: list[Field], curr: list[Field], tol: float) -> bool:
    """True iff every slice moved by less than tol in sup norm."""
    if len(prev) != len(curr):
        raise ConfigurationError(f"trajectory lengths differ: {len(prev)} vs {len(curr)}")
    return all(sup_norm(c.data - p.data) < tol for p, c in zip(prev, curr))


def parareal_run(
    u0: Field,
    cfg: PararealConfig,
    coarse,
    fine=None,
    stepper: StepperConfig | None = None,
    reference: list[Field] | None = None,
) -> tuple[list[Field], PararealTrace]:
    """Run the parareal iteration; returns (trajectory, trace).

    ``fine`` defaults to the Crank-Nicolson propagator built from
    ``stepper``. When ``reference`` (the sequential fine trajectory) is
    given, the trace also records the per-iteration rel-L2 error against it,
    maximized over slices.
    """
    if fine is None:
        if stepper is None:
            raise ConfigurationError("provide either a fine propagator or a stepper config")
        fine = FinePropagator(stepper=stepper, dt_coarse=cfg.dt_coarse)

    s = cfg.slices
    trace = PararealTrace()

    t0 = time.perf_counter()
    trajectory = coarse_sweep(u0, s, coarse)
    init_coarse_time = time.perf_counter() - t0
    # the initial sweep's G evaluations are exactly the trajectory entries
    coarse_cache: list[Field | None] = [trajectory[n + 1] for n in range(s)] + [None]

    if reference is not None:
        trace.coarse_error_vs_fine = max(
            rel_l2_error(trajectory[j], reference[j]) for j in range(1, s + 1)
        )

    for k in range(1, cfg.max_iter + 1):
        iter_start = time.perf_counter()
        pending = list(range(k - 1, s))

        fine_start = time.perf_counter()
        fine_results = parallel_map(fine, [trajectory[n] for n in pending], cfg.workers)
        fine_time = time.perf_counter() - fine_start

        coarse_start = time.perf_counter()
        new_trajectory = list(trajectory)
        new_cache: list[Field | None] = list(coarse_cache)
        for n, fine_val in zip(pending, fine_results):
            coarse_new = coarse(new_trajectory[n])
            new_cache[n] = coarse_new
            coarse_old = coarse_cache[n]
            # (G_new - G_old) first: on frozen slices the operands are bitwise
            # equal, the correction is exactly zero, and the slice becomes the
            # pure fine result -- the exactness property to the last bit.
            new_trajectory[n + 1] = Field(
                u0.grid, (coarse_new.data - coarse_old.data) + fine_val.data
            )
        coarse_time = time.perf_counter() - coarse_start
        if k == 1:
            coarse_time += init_coarse_time

        increment = max(
            sup_norm(new_trajectory[j].data - trajectory[j].data) for j in range(s + 1)
        )
        rel_err = None
        if reference is not None:
            rel_err = max(
                rel_l2_error(new_trajectory[j], reference[j]) for j in range(1, s + 1)
            )
        trajectory = new_trajectory
        coarse_cache = new_cache
        trace.iterations.append(
            IterationStats(
                k=k,
                sup_increment=increment,
                rel_l2_vs_fine=rel_err,
                t_coarse_s=coarse_time,
                t_fine_s=fine_time,
                t_wall_s=time.perf_counter() - iter_start + (init_coarse_time if k == 1 else 0.0),
            )
        )
        if increment < cfg.tol:
            trace.converged = True
            break
    return trajectory, trace


def speedup_model(
    s: int, k: int, c: int, t_nn: float, t_num: float
) -> tuple[float, float, float]:
    """Idealized cost T(k), speedup S_k, and its upper bound.

    Assumes one worker per pending slice: every fine sweep costs c*t_num
    wall time, coarse work is sequential. Returns (T_k, S_k, bound) with

        T(k)  = c k t_num + (2s - k)(k + 1)/2 * t_nn
        S_k   = c s t_num / T(k)
        bound = min( s/k, 2 c s t_num / ((2s - k)(k + 1) t_nn) ).
    """
    if k > s:
        raise ConfigurationError(f"iteration count k={k} cannot exceed slices s={s}")
    if min(s, k, c) < 1 or t_nn <= 0 or t_num <= 0:
        raise ConfigurationError("all cost-model inputs must be positive")
    coarse_evals = (2 * s - k) * (k + 1) / 2
    t_k = c * k * t_num + coarse_evals * t_nn
    t_seq = c * s * t_num
    s_k = t_seq / t_k
    bound = min(s / k, 2 * c * s * t_num / ((2 * s - k) * (k + 1) * t_nn))
    return t_k, s_k, bound


def predicted_walltime(
    s: int, k: int, c: int, t_nn: float, t_num: float, workers: int
) -> float:
    """Cost model generalized to a finite worker pool.

    Fine sweeps serialize in ceil(pending/workers) rounds; with workers >= s
    this reduces to the idealized T(k) fine term. Coarse sweeps stay
    sequential: the initial rollout plus one evaluation per pending slice
    per iteration.
    """
    fine_rounds = sum(-((s - j + 1) // -workers) for j in range(1, k + 1))
    coarse_evals = s + sum(s - j + 1 for j in range(1, k + 1))
    return fine_rounds * c * t_num + coarse_evals * t_nn


def calibrate_costs(u0: Field, coarse, fine, repeats: int = 3) -> tuple[float, float]:
    """Micro-benchmark (t_nn, t_num): one coarse step and one fine substep.

    ``fine`` here is a single-substep map (one cn_step), measured on the
    coarse propagator's output so states are representative.
    """
    state = coarse(u0)  # warm-up (JIT, FFT plans) and a representative state
    t_nn = min(_time_call(coarse, state) for _ in range(repeats))
    t_num = min(_time_call(fine, state) for _ in range(repeats))
    return t_nn, t_num


def _time_call(fn, arg) -> float:
    start = time.perf_counter()
    fn(arg)
    return time.perf_counter() - start


def bench(
    u0: Field,
    cfg: PararealConfig,
    coarse,
    stepper: StepperConfig,
    worker_counts: list[int],
    max_iter: int | None = None,
    out_csv=None,
) -> dict:
    """Wall-clock benchmark across worker counts, against the cost model.

    Runs the parareal iteration once per worker count (fixed iteration
    budget, tol taken from cfg), measures the sequential fine baseline, and
    evaluates the calibrated cost model at each (workers, k). Returns a dict
    with rows (workers, k, t_wall_s, t_model_s, baseline_s) plus the
    calibration constants.
    """
    fine_slice = FinePropagator(stepper=stepper, dt_coarse=cfg.dt_coarse)
    one_substep = lambda u: cn_step(u, stepper)  # noqa: E731
    t_nn, t_num = calibrate_costs(u0, coarse, one_substep)

    base_start = time.perf_counter()
    state = u0
    for _ in range(cfg.slices):
        state = fine_slice(state)
    baseline = time.perf_counter() - base_start

    rows = []
    results = {}
    for workers in worker_counts:
        run_cfg = PararealConfig(
            slices=cfg.slices,
            dt_coarse=cfg.dt_coarse,
            dt_fine=cfg.dt_fine,
            tol=cfg.tol,
            max_iter=max_iter if max_iter is not None else cfg.max_iter,
            workers=workers,
        )
        _, trace = parareal_run(u0, run_cfg, coarse, stepper=stepper)
        cumulative = 0.0
        for it in trace.iterations:
            cumulative += it.t_wall_s
            model = predicted_walltime(cfg.slices, it.k, cfg.substeps, t_nn, t_num, workers)
            rows.append((workers, it.k, cumulative, model, baseline))
        results[workers] = trace

    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["workers", "k", "t_wall_s", "t_model_s", "baseline_s"])
            for row in rows:
                writer.writerow([row[0], row[1]] + [f"{v:.6f}" for v in row[2:]])
    return {"rows": rows, "t_nn": t_nn, "t_num": t_num, "baseline_s": baseline, "traces": results}
