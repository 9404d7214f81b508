"""The four figure styles rendered from run-directory artifacts.

Every figure carries a footer naming the source run directory and its
config checksum so images stay traceable to the exact run that produced
them. Functions return a small metadata dict (what was plotted, what was
skipped) so callers and tests can inspect the result without decoding the
image.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import read_csv_rows, read_manifest, read_snapshot, read_trace, snapshot_times


class PlotKind(enum.Enum):
    HEATMAP_GRID = "heatmap_grid"
    CONVERGENCE = "convergence"
    STABILITY_BAND = "stability_band"
    SPEEDUP = "speedup"


@dataclass
class PlotJob:
    """One figure request against a run directory."""

    run_dir: Path
    kind: PlotKind
    output: Path
    times: list[float] | None = None
    reference_dir: Path | None = field(default=None)  # heatmap error panels


def _footer(fig, run_dir) -> str:
    manifest = read_manifest(run_dir)
    text = f"{Path(run_dir).name} | config {manifest.get('config_sha256', '')[:12]}"
    fig.text(0.99, 0.01, text, ha="right", va="bottom", fontsize=7, color="0.4")
    return text


def _match(available: dict[float, Path], t: float) -> Path | None:
    for tt, path in available.items():
        if abs(tt - t) <= 1e-9:
            return path
    return None


def plot_heatmap_grid(job: PlotJob) -> dict:
    """Solutions (top row) and pointwise errors vs a reference (bottom row).

    3D snapshots are shown as their mid-z plane. Requested times with no
    snapshot in either run are reported in ``missing`` and skipped. The
    error color scale is symmetric about zero.
    """
    if job.reference_dir is None:
        raise ValueError("heatmap grid needs a reference run directory for the error row")
    own = snapshot_times(job.run_dir)
    ref = snapshot_times(job.reference_dir)
    wanted = job.times if job.times is not None else sorted(own)
    panels = []
    missing = []
    for t in wanted:
        path = _match(own, t)
        ref_path = _match(ref, t)
        if path is None or ref_path is None:
            missing.append(t)
            continue
        snap = read_snapshot(path)
        err = snap.midplane() - read_snapshot(ref_path).midplane()
        panels.append((t, snap, err))
    if not panels:
        raise ValueError(f"no requested times available in both runs (missing: {missing})")

    ncols = len(panels)
    fig, axes = plt.subplots(2, ncols, figsize=(3.0 * ncols, 5.6), squeeze=False)
    sol_lo = min(float(s.midplane().min()) for _, s, _ in panels)
    sol_hi = max(float(s.midplane().max()) for _, s, _ in panels)
    err_amp = max(float(np.abs(e).max()) for _, _, e in panels) or 1e-300
    for col, (t, snap, err) in enumerate(panels):
        extent = (-snap.length / 2, snap.length / 2, -snap.length / 2, snap.length / 2)
        top = axes[0][col]
        img = top.imshow(snap.midplane(), origin="lower", extent=extent, vmin=sol_lo, vmax=sol_hi, cmap="RdYlBu_r")
        top.set_title(f"t = {t:g}")
        bottom = axes[1][col]
        err_img = bottom.imshow(err, origin="lower", extent=extent, vmin=-err_amp, vmax=err_amp, cmap="RdBu_r")
        if col == ncols - 1:
            fig.colorbar(img, ax=axes[0].tolist(), shrink=0.9)
            fig.colorbar(err_img, ax=axes[1].tolist(), shrink=0.9)
    axes[0][0].set_ylabel("solution")
    axes[1][0].set_ylabel("error vs reference")
    footer = _footer(fig, job.run_dir)
    fig.savefig(job.output, dpi=130)
    plt.close(fig)
    return {
        "output": Path(job.output),
        "times": [t for t, _, _ in panels],
        "missing": missing,
        "grid": (2, ncols),
        "error_clim": (-err_amp, err_amp),
        "footer": footer,
    }


def plot_convergence(job: PlotJob) -> dict:
    """Sup-norm increments (log scale) and error vs iteration index.

    The k=0 point is the coarse propagator's own error, before any parareal
    correction; it is drawn distinctly so the decay reads from it.
    """
    trace = read_trace(job.run_dir)
    ks = trace["k"]
    fig, (ax_inc, ax_err) = plt.subplots(1, 2, figsize=(9.2, 3.8))
    ax_inc.semilogy(ks, trace["sup_increment"], marker="o", color="tab:blue")
    ax_inc.set_xlabel("iteration k")
    ax_inc.set_ylabel(r"max slice sup-norm increment")
    ax_inc.set_xlim(left=0)
    ax_inc.grid(True, alpha=0.3)

    err_k = [k for k, e in zip(ks, trace["rel_l2"]) if e is not None]
    err_v = [e for e in trace["rel_l2"] if e is not None]
    marked_k0 = False
    if trace["coarse_error"] is not None:
        ax_err.semilogy(
            [0], [trace["coarse_error"]], marker="s", color="tab:red",
            label="k=0 (coarse only)", linestyle="none",
        )
        marked_k0 = True
    if err_v:
        ax_err.semilogy(err_k, err_v, marker="o", color="tab:green", label="after k iterations")
    ax_err.set_xlabel("iteration k")
    ax_err.set_ylabel("rel. L2 error vs fine")
    ax_err.set_xlim(left=0)
    ax_err.grid(True, alpha=0.3)
    if marked_k0 or err_v:
        ax_err.legend(fontsize=8)
    footer = _footer(fig, job.run_dir)
    fig.tight_layout(rect=(0, 0.03, 1, 1))
    fig.savefig(job.output, dpi=130)
    plt.close(fig)
    return {
        "output": Path(job.output),
        "k": ks,
        "k0_marked": marked_k0,
        "x_starts_at_zero": True,
        "footer": footer,
    }


def plot_stability_band(job: PlotJob, csv_name: str = "stability.csv") -> dict:
    """Mean rollout error over time with a +-1 standard deviation band."""
    rows = read_csv_rows(Path(job.run_dir) / csv_name)
    if not rows:
        raise ValueError(f"{job.run_dir}/{csv_name} is empty")
    times = np.array([float(r["time"]) for r in rows])
    mean = np.array([float(r["mean_err"]) for r in rows])
    std = np.array([float(r["std_err"]) for r in rows])
    fig, ax = plt.subplots(figsize=(6.4, 3.8))
    ax.fill_between(times, mean - std, mean + std, alpha=0.25, color="tab:blue", label="mean +- 1 std")
    ax.plot(times, mean, color="tab:blue", label="mean error")
    ax.set_xlabel("time")
    ax.set_ylabel("rel. L2 error vs fine")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    footer = _footer(fig, job.run_dir)
    fig.tight_layout(rect=(0, 0.03, 1, 1))
    fig.savefig(job.output, dpi=130)
    plt.close(fig)
    return {
        "output": Path(job.output),
        "band_low": (mean - std).tolist(),
        "band_high": (mean + std).tolist(),
        "mean": mean.tolist(),
        "footer": footer,
    }


def plot_speedup(job: PlotJob, csv_name: str = "bench.csv") -> dict:
    """Wall time vs iteration count, one line per worker count, with the
    sequential fine-solver baseline as a horizontal rule."""
    rows = read_csv_rows(Path(job.run_dir) / csv_name)
    if not rows:
        raise ValueError(f"{job.run_dir}/{csv_name} is empty")
    by_workers: dict[int, list[tuple[int, float]]] = {}
    baseline = float(rows[0]["baseline_s"])
    for r in rows:
        by_workers.setdefault(int(r["workers"]), []).append((int(r["k"]), float(r["t_wall_s"])))
    fig, ax = plt.subplots(figsize=(6.4, 3.8))
    workers_sorted = sorted(by_workers)
    for w in workers_sorted:
        series = sorted(by_workers[w])
        ax.plot([k for k, _ in series], [t for _, t in series], marker="o", label=f"{w} workers")
    ax.axhline(baseline, color="black", linewidth=1.2, label="fine solver (sequential)")
    ax.set_xlabel("iteration count k")
    ax.set_ylabel("wall time [s]")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    footer = _footer(fig, job.run_dir)
    fig.tight_layout(rect=(0, 0.03, 1, 1))
    fig.savefig(job.output, dpi=130)
    plt.close(fig)
    return {
        "output": Path(job.output),
        "workers": workers_sorted,
        "baseline_s": baseline,
        "footer": footer,
    }
