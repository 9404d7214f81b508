"""Readers for the solver's on-disk formats.

Implemented against the documented on-disk formats rather than the solver
package, so this component has no import dependency on it:

* field snapshot: magic "ACF1", u32 dim, u32 n, f64 length (little-endian),
  then n^dim float64 values with x varying fastest;
* ``manifest.json``: maps artifact names to checksums and snapshot names to
  their simulation times;
* CSV telemetry: ``trace.csv``, ``stability.csv``-style tables, ``bench.csv``.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SNAPSHOT_MAGIC = b"ACF1"


@dataclass(frozen=True)
class FieldSnapshot:
    dim: int
    n: int
    length: float
    data: np.ndarray  # shape (n,)*dim, axes ordered so x is last

    def midplane(self) -> np.ndarray:
        """2D view for plotting: the field itself, or the mid-z slice in 3D."""
        if self.dim == 2:
            return self.data
        return self.data[self.n // 2]


def read_snapshot(path) -> FieldSnapshot:
    raw = Path(path).read_bytes()
    if len(raw) < 20 or raw[:4] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a field snapshot (bad magic)")
    dim, n, length = struct.unpack("<IId", raw[4:20])
    count = n**dim
    payload = raw[20:]
    if len(payload) != 8 * count:
        raise ValueError(f"{path}: expected {8 * count} payload bytes, found {len(payload)}")
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape((n,) * dim)
    return FieldSnapshot(dim=dim, n=n, length=length, data=data)


def read_manifest(run_dir) -> dict:
    manifest_path = Path(run_dir) / "manifest.json"
    if not manifest_path.exists():
        raise ValueError(f"{run_dir}: no manifest.json (not a run directory)")
    return json.loads(manifest_path.read_text())


def snapshot_times(run_dir) -> dict[float, Path]:
    """Simulation time -> snapshot path, from the run's manifest."""
    manifest = read_manifest(run_dir)
    root = Path(run_dir)
    return {float(t): root / name for name, t in manifest.get("snapshot_times", {}).items()}


def read_csv_rows(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_trace(run_dir) -> dict:
    """Parse trace.csv into the k=0 coarse error plus per-iteration series."""
    rows = read_csv_rows(Path(run_dir) / "trace.csv")
    if not rows:
        raise ValueError(f"{run_dir}: trace.csv is empty")
    coarse_error = None
    ks: list[int] = []
    increments: list[float] = []
    errors: list[float | None] = []
    for row in rows:
        k = int(row["k"])
        if k == 0:
            coarse_error = float(row["rel_l2_vs_fine"]) if row["rel_l2_vs_fine"] else None
            continue
        ks.append(k)
        increments.append(float(row["sup_increment"]))
        errors.append(float(row["rel_l2_vs_fine"]) if row["rel_l2_vs_fine"] else None)
    if not ks:
        raise ValueError(f"{run_dir}: trace.csv holds no iterations")
    return {"coarse_error": coarse_error, "k": ks, "sup_increment": increments, "rel_l2": errors}
