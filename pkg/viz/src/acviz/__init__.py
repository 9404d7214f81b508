"""Offline plotting for solver run directories.

Reads the binary field snapshots and CSV telemetry a run directory contains
(via its manifest) and renders the standard figure styles: solution/error
heatmap grids, convergence curves, training-stability bands, and speedup
charts. Strictly read-only over run directories.
"""

from .io import FieldSnapshot, read_manifest, read_snapshot
from .plots import PlotJob, PlotKind, plot_convergence, plot_heatmap_grid, plot_speedup, plot_stability_band

__all__ = [
    "FieldSnapshot",
    "PlotJob",
    "PlotKind",
    "plot_convergence",
    "plot_heatmap_grid",
    "plot_speedup",
    "plot_stability_band",
    "read_manifest",
    "read_snapshot",
]
