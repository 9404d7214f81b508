"""Config parsing, command orchestration, run directories, exit codes."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from acpara.cli import main
from acpara.errors import ConfigurationError
from acpara.grid import read_field
from acpara.runconfig import parse_config, parse_config_text

BASE_2D = """
[grid]
dim = 2
n = 16

[physics]
kind = classic

[fine]
dt = 0.001

[coarse]
dt = 0.002

[parareal]
s = 3

[train]
t_train = 0.004
dt = 0.001
epochs = 1
r_total = 2
subsets = 1
subset_size = 2
inner_updates = 2

[output]
snapshot_every = 2
"""


def write_config(tmp_path: Path, text: str = BASE_2D) -> Path:
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return path


class TestParsing:
    def test_minimal_2d_defaults(self):
        cfg = parse_config(None, ["grid.dim=2"])
        assert cfg.get("physics", "epsilon") == 0.01
        assert cfg.get("coarse", "dt") == 0.1
        assert cfg.get("fine", "dt") == 0.001
        assert cfg.get("parareal", "tol") == 1e-6
        assert cfg.get("grid", "length") == 1.0
        assert cfg.get("ic", "kind") == "bubbles"

    def test_minimal_3d_defaults(self):
        cfg = parse_config(None, ["grid.dim=3", "grid.n=8"])
        assert cfg.get("physics", "epsilon") == 0.02
        assert cfg.get("parareal", "tol") == 1e-8
        assert cfg.get("ic", "kind") == "star"

    def test_negative_epsilon_names_key(self):
        with pytest.raises(ConfigurationError, match="physics.epsilon"):
            parse_config(None, ["physics.epsilon=-1"])

    def test_unknown_key_reports_line(self, tmp_path):
        path = write_config(tmp_path, "[grid]\ndim = 2\nbogus = 3\n")
        with pytest.raises(ConfigurationError, match="line 3.*bogus"):
            parse_config(path)

    def test_type_mismatch_reports_line(self, tmp_path):
        path = write_config(tmp_path, "[grid]\nn = sixteen\n")
        with pytest.raises(ConfigurationError, match="line 2"):
            parse_config(path)

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigurationError, match="duplicate"):
            parse_config_text("[grid]\nn = 8\nn = 16\n")

    def test_comments_and_blanks_ignored(self):
        values = parse_config_text("# top\n[grid]\n\nn = 8  # inline\n")
        assert values[("grid", "n")] == 8

    def test_override_wins_over_file(self, tmp_path):
        path = write_config(tmp_path, "[parareal]\nworkers = 4\ns = 2\n")
        cfg = parse_config(path, ["parareal.workers=8"])
        assert cfg.get("parareal", "workers") == 8

    def test_t_final_consistency_enforced(self):
        with pytest.raises(ConfigurationError, match="t_final"):
            parse_config(None, ["parareal.s=10", "parareal.t_final=2.0", "coarse.dt=0.1"])
        cfg = parse_config(None, ["parareal.t_final=0.5", "coarse.dt=0.1"])
        assert cfg.get("parareal", "s") == 5

    def test_workers_env_default(self, monkeypatch):
        monkeypatch.setenv("ACPARA_WORKERS", "6")
        assert parse_config(None, []).get("parareal", "workers") == 6
        monkeypatch.setenv("ACPARA_WORKERS", "zero")
        with pytest.raises(ConfigurationError):
            parse_config(None, [])

    def test_resolved_round_trip(self, tmp_path):
        cfg = parse_config(None, ["grid.n=24", "physics.kind=mass"])
        rendered = tmp_path / "resolved.cfg"
        rendered.write_text(cfg.to_text())
        again = parse_config(rendered)
        assert again.values == cfg.values

    def test_ic_kind_dimension_check(self):
        with pytest.raises(ConfigurationError, match="bubbles"):
            parse_config(None, ["grid.dim=3", "ic.kind=bubbles"])


class TestCommands:
    def test_gen_ic_writes_manifest_and_snapshot(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["gen-ic", "--config", str(cfg), "--output", str(tmp_path / "runs")]) == 0
        run_dir = next((tmp_path / "runs").iterdir())
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert "t000000.acf" in manifest["files"]
        assert manifest["snapshot_times"]["t000000.acf"] == 0.0
        assert (run_dir / "config.resolved").exists()
        field = read_field(run_dir / "t000000.acf")
        assert field.grid.n == 16

    def test_fine_run_then_self_compare_is_zero(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out = tmp_path / "runs"
        assert main(["fine-run", "--config", str(cfg), "--output", str(out)]) == 0
        run_a = capsys.readouterr().out.strip()
        assert main(["compare", run_a, run_a, "--config", str(cfg), "--output", str(out)]) == 0
        cmp_dir = capsys.readouterr().out.strip()
        with open(Path(cmp_dir) / "errors.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows
        assert all(r["status"] == "ok" and float(r["rel_l2"]) == 0.0 for r in rows)

    def test_compare_flags_missing_timestamps(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out = tmp_path / "runs"
        main(["fine-run", "--config", str(cfg), "--output", str(out)])
        run_a = capsys.readouterr().out.strip()
        main(["fine-run", "--config", str(cfg), "--output", str(out), "--set", "output.snapshot_every=4"])
        run_b = capsys.readouterr().out.strip()
        main(["compare", run_a, run_b, "--config", str(cfg), "--output", str(out)])
        cmp_dir = capsys.readouterr().out.strip()
        with open(Path(cmp_dir) / "errors.csv") as fh:
            rows = list(csv.DictReader(fh))
        statuses = {r["status"] for r in rows}
        assert "missing_reference" in statuses  # run_a has the denser cadence
        aligned = [r for r in rows if r["status"] == "ok"]
        assert aligned and all(float(r["rel_l2"]) == 0.0 for r in aligned)

    def test_parareal_without_checkpoint_exits_2(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        code = main(["parareal", "--config", str(cfg), "--output", str(tmp_path / "runs")])
        assert code == 2
        assert "missing model checkpoint" in capsys.readouterr().err

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        code = main(["gen-ic", "--config", str(cfg), "--set", "physics.epsilon=-3"])
        assert code == 2
        assert "error: config" in capsys.readouterr().err

    def test_io_error_exit_code(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        code = main(["compare", str(tmp_path / "nope"), str(tmp_path / "nada"),
                     "--config", str(cfg), "--output", str(tmp_path / "runs")])
        assert code == 4

    def test_train_then_parareal_pipeline(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out = tmp_path / "runs"
        assert main(["train", "--config", str(cfg), "--output", str(out)]) == 0
        train_dir = Path(capsys.readouterr().out.strip())
        model = train_dir / "model.acnn"
        assert model.exists()
        assert (train_dir / "model_e0.acnn").exists()
        assert (train_dir / "training_log.csv").exists()

        code = main([
            "parareal", "--config", str(cfg), "--output", str(out),
            "--set", f"coarse.checkpoint={model}",
        ])
        assert code == 0
        run_dir = Path(capsys.readouterr().out.strip())
        assert (run_dir / "trace.csv").exists()
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["notes"]["iterations"] >= 1
        # slices 0..s all written, timestamped by the coarse step
        assert manifest["snapshot_times"]["t000003.acf"] == pytest.approx(0.006)

        code = main([
            "coarse-run", "--config", str(cfg), "--output", str(out),
            "--set", f"coarse.checkpoint={model}",
        ])
        assert code == 0

    def test_bench_command(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out = tmp_path / "runs"
        main(["train", "--config", str(cfg), "--output", str(out)])
        model = Path(capsys.readouterr().out.strip()) / "model.acnn"
        code = main([
            "bench", "--config", str(cfg), "--output", str(out),
            "--set", f"coarse.checkpoint={model}",
            "--worker-counts", "1", "--bench-iters", "2",
        ])
        assert code == 0
        bench_dir = Path(capsys.readouterr().out.strip())
        lines = (bench_dir / "bench.csv").read_text().splitlines()
        assert lines[0] == "workers,k,t_wall_s,t_model_s,baseline_s"
        assert len(lines) == 3

    def test_rerun_from_resolved_config_reproduces_snapshots(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out = tmp_path / "runs"
        main(["fine-run", "--config", str(cfg), "--output", str(out)])
        first = Path(capsys.readouterr().out.strip())
        main(["fine-run", "--config", str(first / "config.resolved")])
        second = Path(capsys.readouterr().out.strip())
        snaps = sorted(p.name for p in first.glob("*.acf"))
        assert snaps
        for name in snaps:
            assert (first / name).read_bytes() == (second / name).read_bytes()
        assert (first / "diagnostics.csv").read_bytes() == (second / "diagnostics.csv").read_bytes()

    def test_manifest_checksums_are_valid(self, tmp_path, capsys):
        import hashlib

        cfg = write_config(tmp_path)
        main(["gen-ic", "--config", str(cfg), "--output", str(tmp_path / "runs")])
        run_dir = Path(capsys.readouterr().out.strip())
        manifest = json.loads((run_dir / "manifest.json").read_text())
        for name, digest in manifest["files"].items():
            actual = hashlib.sha256((run_dir / name).read_bytes()).hexdigest()
            assert actual == digest

    def test_star_formula_recorded_in_metadata(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "[grid]\ndim = 3\nn = 8\n")
        main(["gen-ic", "--config", str(cfg), "--output", str(tmp_path / "runs")])
        run_dir = Path(capsys.readouterr().out.strip())
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert "cos(6*theta)" in manifest["notes"]["ic_star_formula"]
