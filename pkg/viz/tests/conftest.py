"""Synthetic run directories built straight from the published formats."""

import hashlib
import json
import struct

import numpy as np
import pytest


def write_snapshot(path, data: np.ndarray, length: float = 1.0) -> None:
    dim = data.ndim
    n = data.shape[0]
    with open(path, "wb") as fh:
        fh.write(b"ACF1" + struct.pack("<IId", dim, n, length))
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def finish_run_dir(run_dir, snapshot_times: dict[str, float], notes=None) -> None:
    files = {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(run_dir.iterdir())
        if p.is_file()
    }
    manifest = {
        "command": "synthetic",
        "config_sha256": files.get("config.resolved", "0" * 64),
        "files": files,
        "snapshot_times": snapshot_times,
        "notes": notes or {},
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))


@pytest.fixture
def field_run(tmp_path):
    """A run directory with 2D snapshots at t = 0, 1, 2, 3."""

    def build(name: str, offset: float = 0.0, n: int = 24):
        run_dir = tmp_path / name
        run_dir.mkdir()
        (run_dir / "config.resolved").write_text("[grid]\nn = 24\n")
        times = {}
        xs = np.linspace(-0.5, 0.5, n, endpoint=False)
        for idx, t in enumerate([0.0, 1.0, 2.0, 3.0]):
            blob = np.tanh((0.2 + 0.02 * t - np.hypot(*np.meshgrid(xs, xs))) / 0.05)
            write_snapshot(run_dir / f"t{idx:06d}.acf", blob + offset)
            times[f"t{idx:06d}.acf"] = t
        finish_run_dir(run_dir, times)
        return run_dir

    return build


@pytest.fixture
def trace_run(tmp_path):
    """A run directory with a trace.csv of a converging iteration."""

    def build(iterations: int = 6, with_k0: bool = True):
        run_dir = tmp_path / f"trace{iterations}"
        run_dir.mkdir()
        (run_dir / "config.resolved").write_text("[parareal]\ns = 8\n")
        lines = ["k,sup_increment,rel_l2_vs_fine,t_coarse_s,t_fine_s,t_wall_s"]
        if with_k0:
            lines.append("0,,5.0e-02,,,")
        for k in range(1, iterations + 1):
            inc = 10.0 ** (-k)
            err = 5.0e-2 * 4.0 ** (-k)
            lines.append(f"{k},{inc:.6e},{err:.6e},0.5,1.0,1.6")
        (run_dir / "trace.csv").write_text("\n".join(lines) + "\n")
        finish_run_dir(run_dir, {})
        return run_dir

    return build


@pytest.fixture
def stability_run(tmp_path):
    def build(zero_std: bool = False):
        run_dir = tmp_path / ("stab0" if zero_std else "stab")
        run_dir.mkdir()
        (run_dir / "config.resolved").write_text("[train]\nepochs = 3\n")
        lines = ["time,mean_err,std_err,n_runs"]
        for j in range(1, 11):
            mean = 0.01 + 0.002 * j
            std = 0.0 if zero_std else 0.003
            lines.append(f"{0.1 * j:.3f},{mean:.6e},{std:.6e},3")
        (run_dir / "stability.csv").write_text("\n".join(lines) + "\n")
        finish_run_dir(run_dir, {})
        return run_dir

    return build


@pytest.fixture
def bench_run(tmp_path):
    run_dir = tmp_path / "bench"
    run_dir.mkdir()
    (run_dir / "config.resolved").write_text("[parareal]\ns = 10\n")
    lines = ["workers,k,t_wall_s,t_model_s,baseline_s"]
    for workers in (4, 1, 8, 2):  # deliberately unsorted
        for k in (1, 2, 3):
            wall = 10.0 * k / workers + 1.0
            lines.append(f"{workers},{k},{wall:.4f},{wall * 0.95:.4f},12.0")
    (run_dir / "bench.csv").write_text("\n".join(lines) + "\n")
    finish_run_dir(run_dir, {})
    return run_dir
