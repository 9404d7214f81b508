"""Command-line entry point and run-directory management.

Each command writes into a fresh timestamped directory under the configured
output root: a resolved copy of the configuration, the command's artifacts,
and a ``manifest.json`` listing every file with its SHA-256 checksum plus
the snapshot-time map that ``compare`` uses to align runs.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O or file-format failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import sys
from pathlib import Path

from .errors import ConfigurationError, DivergenceError, FormatError, NonConvergenceError
from .fine import reference_run
from .grid import Field, read_field, write_field
from .network import SurrogatePropagator, load_checkpoint, save_checkpoint
from .parareal import FinePropagator, bench, parareal_run
from .physics import STAR_FORMULA, ic_bubbles, ic_random, ic_star, rel_l2_error
from .runconfig import RunConfig, parse_config
from .training import train, write_training_log

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunDirectory:
    """A timestamped, self-describing output directory."""

    def __init__(self, root: str, command: str, config: RunConfig):
        stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
        self.path = Path(root) / f"{command}-{stamp}"
        self.path.mkdir(parents=True, exist_ok=False)
        self.command = command
        self.notes: dict = {}
        self.snapshot_times: dict[str, float] = {}
        (self.path / "config.resolved").write_text(config.to_text())

    def add_snapshot(self, name: str, field: Field, time: float) -> None:
        write_field(field, self.path / name)
        self.snapshot_times[name] = time

    def finish(self) -> Path:
        files = {
            p.name: _sha256(p)
            for p in sorted(self.path.iterdir())
            if p.is_file() and p.name != "manifest.json"
        }
        manifest = {
            "command": self.command,
            "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "config_sha256": files.get("config.resolved", ""),
            "files": files,
            "snapshot_times": self.snapshot_times,
            "notes": self.notes,
        }
        with open(self.path / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        return self.path


def build_initial_condition(config: RunConfig) -> Field:
    grid = config.make_grid()
    kind = config.get("ic", "kind")
    eps = config.get("physics", "epsilon")
    if kind == "bubbles":
        return ic_bubbles(grid, eps)
    if kind == "star":
        return ic_star(grid, eps)
    return ic_random(grid, config.get("ic", "amplitude"), config.get("ic", "seed"))


def _note_ic(run: RunDirectory, config: RunConfig) -> None:
    if config.get("ic", "kind") == "star":
        run.notes["ic_star_formula"] = STAR_FORMULA


def _load_model(config: RunConfig):
    path = config.get("coarse", "checkpoint")
    if not path:
        raise ConfigurationError("missing model checkpoint: set coarse.checkpoint")
    if not Path(path).exists():
        raise ConfigurationError(f"missing model checkpoint: {path} does not exist")
    params = load_checkpoint(path, expected_arch=config.arch())
    return SurrogatePropagator(params, composition=config.get("coarse", "composition"))


def cmd_gen_ic(config: RunConfig, args) -> Path:
    run = RunDirectory(config.get("output", "directory"), "gen-ic", config)
    run.add_snapshot("t000000.acf", build_initial_condition(config), 0.0)
    _note_ic(run, config)
    return run.finish()


def cmd_fine_run(config: RunConfig, args) -> Path:
    run = RunDirectory(config.get("output", "directory"), "fine-run", config)
    _note_ic(run, config)
    u0 = build_initial_condition(config)
    stepper = config.fine_stepper()
    t_final = config.get("parareal", "t_final")
    snapshots = reference_run(
        u0,
        t_final,
        stepper,
        snapshot_every=config.get("output", "snapshot_every"),
        out_dir=run.path,
    )
    for step, _field in snapshots:
        run.snapshot_times[f"t{step:06d}.acf"] = step * stepper.dt
    return run.finish()


def cmd_train(config: RunConfig, args) -> Path:
    run = RunDirectory(config.get("output", "directory"), "train", config)
    params, log = train(
        config.train_config(),
        config.arch(),
        config.make_physics(),
        config.make_grid(),
        out_dir=run.path,
    )
    save_checkpoint(params, run.path / "model.acnn")
    write_training_log(log, run.path / "training_log.csv")
    return run.finish()


def cmd_coarse_run(config: RunConfig, args) -> Path:
    run = RunDirectory(config.get("output", "directory"), "coarse-run", config)
    _note_ic(run, config)
    coarse = _load_model(config)
    dt_coarse = config.get("coarse", "dt")
    state = build_initial_condition(config)
    run.add_snapshot("t000000.acf", state, 0.0)
    for n in range(1, config.get("parareal", "s") + 1):
        state = coarse(state)
        run.add_snapshot(f"t{n:06d}.acf", state, n * dt_coarse)
    return run.finish()


def cmd_parareal(config: RunConfig, args) -> Path:
    run = RunDirectory(config.get("output", "directory"), "parareal", config)
    _note_ic(run, config)
    coarse = _load_model(config)
    pcfg = config.parareal_config()
    u0 = build_initial_condition(config)
    trajectory, trace = parareal_run(u0, pcfg, coarse, stepper=config.fine_stepper())
    for n, field in enumerate(trajectory):
        run.add_snapshot(f"t{n:06d}.acf", field, n * pcfg.dt_coarse)
    trace.write_csv(run.path / "trace.csv")
    run.notes["converged"] = trace.converged
    run.notes["iterations"] = len(trace.iterations)
    return run.finish()


def cmd_bench(config: RunConfig, args) -> Path:
    run = RunDirectory(config.get("output", "directory"), "bench", config)
    _note_ic(run, config)
    coarse = _load_model(config)
    worker_counts = [int(w) for w in args.worker_counts.split(",")]
    result = bench(
        build_initial_condition(config),
        config.parareal_config(),
        coarse,
        config.fine_stepper(),
        worker_counts,
        max_iter=args.bench_iters,
        out_csv=run.path / "bench.csv",
    )
    run.notes["t_nn_s"] = result["t_nn"]
    run.notes["t_num_s"] = result["t_num"]
    run.notes["baseline_s"] = result["baseline_s"]
    return run.finish()


def _snapshot_map(run_dir: Path) -> dict[float, Path]:
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"{run_dir} has no manifest.json (not a run directory)")
    manifest = json.loads(manifest_path.read_text())
    return {float(t): run_dir / name for name, t in manifest["snapshot_times"].items()}


def cmd_compare(config: RunConfig, args) -> Path:
    import csv

    run_a = Path(args.run)
    run_b = Path(args.reference)
    snaps_a = _snapshot_map(run_a)
    snaps_b = _snapshot_map(run_b)
    run = RunDirectory(config.get("output", "directory"), "compare", config)
    run.notes["run"] = str(run_a)
    run.notes["reference"] = str(run_b)

    def _lookup(snaps: dict[float, Path], t: float) -> Path | None:
        for tt, path in snaps.items():
            if abs(t - tt) <= 1e-9:
                return path
        return None

    times = sorted(set(snaps_a) | set(snaps_b))
    merged: list[float] = []
    for t in times:  # collapse timestamps that differ only by rounding
        if not merged or abs(t - merged[-1]) > 1e-9:
            merged.append(t)
    rows = []
    for t in merged:
        path_a = _lookup(snaps_a, t)
        path_b = _lookup(snaps_b, t)
        if path_a is not None and path_b is not None:
            err, absolute = rel_l2_error(read_field(path_a), read_field(path_b), return_flag=True)
            rows.append((t, f"{err:.16e}", "absolute" if absolute else "ok"))
        else:
            rows.append((t, "", "missing_run" if path_a is None else "missing_reference"))
    with open(run.path / "errors.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "rel_l2", "status"])
        writer.writerows(rows)
    return run.finish()


COMMANDS = {
    "gen-ic": cmd_gen_ic,
    "fine-run": cmd_fine_run,
    "train": cmd_train,
    "coarse-run": cmd_coarse_run,
    "parareal": cmd_parareal,
    "bench": cmd_bench,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acpara",
        description="Parallel-in-time Allen-Cahn solver with a learned coarse propagator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="path to a key = value config file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override a config value (repeatable)",
        )
        p.add_argument("--workers", type=int, help="shortcut for --set parareal.workers=N")
        p.add_argument("--output", help="shortcut for --set output.directory=DIR")
        if name == "bench":
            p.add_argument("--worker-counts", default="1,2,4,8")
            p.add_argument("--bench-iters", type=int, default=None)
        if name == "compare":
            p.add_argument("run", help="run directory to evaluate")
            p.add_argument("reference", help="run directory used as the reference")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.workers is not None:
        overrides.append(f"parareal.workers={args.workers}")
    if args.output is not None:
        overrides.append(f"output.directory={args.output}")
    try:
        config = parse_config(args.config, overrides)
        out_dir = COMMANDS[args.command](config, args)
    except ConfigurationError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergenceError, DivergenceError) as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FormatError, OSError) as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_IO
    print(out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
