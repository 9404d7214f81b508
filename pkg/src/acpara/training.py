"""Self-supervised training of the surrogate on ensembles of random starts.

The strategy: draw R random initial fields, split them into p subsets of q,
and walk each subset forward in time. At every time step the optimizer takes
b updates of the scheme-residual loss on the subset's current states, then
the (post-update) predictions are frozen and become the next step's inputs.
The whole schedule repeats for a number of epochs. No reference solver data
is ever needed; the loss is the residual of the discrete scheme itself.

Because the schedule feeds the network its own frozen predictions, the
parameters start from a near-identity map (see ``init_params_identity``):
a generic small-weight start collapses every rollout to a constant within a
few steps, after which almost all updates fit the residual on constant
states and the real dynamics are never learned. The default horizon spans
the benchmark simulation window so the rollouts visit the coarsened,
sharp-interface states a coarse propagator meets in production.

``stability_study`` retrains the same configuration under several seeds and
reports the mean/std band of the surrogate rollout error against the fine
solver, one row per evaluation time.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import rng
from .errors import ConfigurationError, DivergenceError
from .fine import StepperConfig, fine_propagate
from .grid import Field, GridSpec
from .network import (
    ArchSpec,
    ModelParams,
    forward_batch,
    init_params_identity,
    loss_and_grad,
    save_checkpoint,
)
from .physics import PhysicsParams, ic_random, rel_l2_error

TRAIN_IC_AMPLITUDE = 0.9
DIVERGENCE_CAP = 1e6


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the training schedule (R = subsets * subset_size)."""

    r_total: int = 16
    subsets: int = 4
    subset_size: int = 4
    inner_updates: int = 5
    t_train: float = 10.0
    dt: float = 0.01
    epochs: int = 4
    learning_rate: float = 2e-3
    seed: int = 0
    optimizer: str = "adam"
    cosine_decay: bool = True

    def __post_init__(self) -> None:
        if self.r_total != self.subsets * self.subset_size:
            raise ConfigurationError(
                f"r_total={self.r_total} must equal subsets*subset_size="
                f"{self.subsets * self.subset_size}"
            )
        for name in ("r_total", "subsets", "subset_size", "inner_updates"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be non-negative")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.dt <= 0 or self.t_train <= 0:
            raise ConfigurationError("dt and t_train must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"optimizer must be adam or sgd, got {self.optimizer!r}")

    @property
    def steps_per_subset(self) -> int:
        ratio = self.t_train / self.dt
        steps = round(ratio)
        if steps < 1 or abs(ratio - steps) > 1e-9:
            raise ConfigurationError(
                f"t_train={self.t_train} is not an integer multiple of dt={self.dt}"
            )
        return steps


class AdamOptimizer:
    """Adaptive-moment updates (decay 0.9/0.999, epsilon guard 1e-8)."""

    def __init__(self, params: ModelParams, learning_rate: float):
        self.lr = learning_rate
        self.beta1 = 0.9
        self.beta2 = 0.999
        self.eps = 1e-8
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.tensors.items()}

    def step(self, params: ModelParams, grads: dict[str, np.ndarray], lr_scale: float = 1.0) -> None:
        self.t += 1
        correction = np.sqrt(1.0 - self.beta2**self.t) / (1.0 - self.beta1**self.t)
        rate = self.lr * lr_scale * correction
        for name, tensor in params.tensors.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            tensor -= rate * m / (np.sqrt(v) + self.eps)


class SgdOptimizer:
    """Plain gradient descent."""

    def __init__(self, params: ModelParams, learning_rate: float):
        self.lr = learning_rate

    def step(self, params: ModelParams, grads: dict[str, np.ndarray], lr_scale: float = 1.0) -> None:
        for name, tensor in params.tensors.items():
            tensor -= self.lr * lr_scale * grads[name]


def generate_training_ics(cfg: TrainConfig, grid: GridSpec, physics: PhysicsParams) -> list[Field]:
    """R random initial fields with seeds derived deterministically from
    cfg.seed; amplitude fixed at 0.9."""
    return [
        ic_random(grid, TRAIN_IC_AMPLITUDE, rng.derive_seed(cfg.seed, 1000 + r))
        for r in range(cfg.r_total)
    ]


def train(
    cfg: TrainConfig,
    arch: ArchSpec,
    physics: PhysicsParams,
    grid: GridSpec,
    out_dir=None,
    log_callback=None,
) -> tuple[ModelParams, list[tuple[int, int, int, int, float]]]:
    """Run the full schedule; returns the trained parameters and the log.

    Log rows are (epoch, subset, step, update, loss), one per optimizer
    update. With ``out_dir`` set, a checkpoint ``model_e<k>.acnn`` is written
    after every epoch and ``training_log.csv`` at the end.
    """
    if arch.dim != grid.dim or arch.kind is not physics.kind:
        raise ConfigurationError("architecture, grid, and physics must agree")
    # near-identity start: rollout states stay realistic from the first step
    params = init_params_identity(arch, rng.derive_seed(cfg.seed, 0))
    if cfg.optimizer == "adam":
        optimizer = AdamOptimizer(params, cfg.learning_rate)
    else:
        optimizer = SgdOptimizer(params, cfg.learning_rate)

    ics = generate_training_ics(cfg, grid, physics)
    step_cfg = StepperConfig(dt=cfg.dt, physics=physics)
    n_steps = cfg.steps_per_subset
    total_updates = cfg.epochs * cfg.subsets * n_steps * cfg.inner_updates

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    last_checkpoint: str | None = None

    log: list[tuple[int, int, int, int, float]] = []
    done = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(rng.derive_seed(cfg.seed, 2000 + epoch), cfg.r_total)
        for subset in range(cfg.subsets):
            members = order[subset * cfg.subset_size : (subset + 1) * cfg.subset_size]
            states = [ics[r] for r in members]
            for step in range(n_steps):
                for update in range(cfg.inner_updates):
                    loss, grads = loss_and_grad(params, states, step_cfg)
                    if not np.isfinite(loss) or loss > DIVERGENCE_CAP:
                        raise DivergenceError(
                            f"training diverged at epoch {epoch} subset {subset} "
                            f"step {step} update {update} (loss {loss:.3e})",
                            checkpoint_path=last_checkpoint,
                        )
                    scale = 1.0
                    if cfg.cosine_decay and total_updates > 1:
                        scale = 0.5 * (1.0 + np.cos(np.pi * done / (total_updates - 1)))
                    optimizer.step(params, grads, lr_scale=scale)
                    log.append((epoch, subset, step, update, loss))
                    if log_callback is not None:
                        log_callback(log[-1])
                    done += 1
                # freeze the post-update prediction as the next input state
                stacked = forward_batch(params, np.stack([s.data for s in states]))
                states = [Field(grid, stacked[j]) for j in range(len(states))]
        if out_path is not None:
            ckpt = out_path / f"model_e{epoch}.acnn"
            save_checkpoint(params, ckpt)
            last_checkpoint = str(ckpt)

    if out_path is not None:
        write_training_log(log, out_path / "training_log.csv")
    return params, log


def write_training_log(log, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "subset", "step", "update", "loss"])
        writer.writerows(log)


@dataclass(frozen=True)
class EvalProblem:
    """Rollout benchmark: start state, horizon, and the two step sizes."""

    u0: Field
    t_final: float
    dt_coarse: float
    fine: StepperConfig

    @property
    def n_outputs(self) -> int:
        ratio = self.t_final / self.dt_coarse
        count = round(ratio)
        if count < 1 or abs(ratio - count) > 1e-9:
            raise ConfigurationError("t_final must be an integer multiple of dt_coarse")
        return count


def surrogate_rollout_errors(params: ModelParams, problem: EvalProblem, composition: int) -> list[tuple[float, float]]:
    """(time, rel_l2 error vs fine solver) for a pure surrogate rollout."""
    grid = problem.u0.grid
    times = []
    current = problem.u0.data
    reference = problem.u0
    for j in range(1, problem.n_outputs + 1):
        for _ in range(composition):
            current = forward_batch(params, current[None])[0]
        reference = fine_propagate(reference, (j - 1) * problem.dt_coarse, j * problem.dt_coarse, problem.fine)
        times.append((j * problem.dt_coarse, rel_l2_error(Field(grid, current), reference)))
    return times


def stability_study(
    arch: ArchSpec,
    cfg: TrainConfig,
    n_runs: int,
    problem: EvalProblem,
    physics: PhysicsParams,
    grid: GridSpec,
    composition: int = 1,
    seeds: list[int] | None = None,
    out_csv=None,
) -> list[tuple[float, float, float, int]]:
    """Train ``n_runs`` models under distinct seeds and aggregate rollout
    errors; rows are (time, mean_err, std_err, n_runs_used).

    Failed trainings are skipped (and reported), not fatal, so a single
    diverging seed cannot sink the study.
    """
    if n_runs < 2:
        raise ConfigurationError("stability study needs at least 2 runs")
    if seeds is None:
        seeds = [rng.derive_seed(cfg.seed, 3000 + i) for i in range(n_runs)]
    if len(seeds) != n_runs:
        raise ConfigurationError(f"need exactly one seed per run, got {len(seeds)} for {n_runs}")

    series: list[list[tuple[float, float]]] = []
    failures = 0
    for run_seed in seeds:
        run_cfg = replace(cfg, seed=run_seed)
        try:
            params, _ = train(run_cfg, arch, physics, grid)
        except DivergenceError:
            failures += 1
            continue
        series.append(surrogate_rollout_errors(params, problem, composition))
    if not series:
        raise DivergenceError(f"all {n_runs} stability runs diverged")

    rows: list[tuple[float, float, float, int]] = []
    for j in range(problem.n_outputs):
        time = series[0][j][0]
        errs = [s[j][1] for s in series]
        mean = statistics.fmean(errs)
        std = statistics.stdev(errs) if len(errs) > 1 else 0.0
        rows.append((time, mean, std, len(errs)))

    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "mean_err", "std_err", "n_runs"])
            writer.writerows(rows)
    return rows
