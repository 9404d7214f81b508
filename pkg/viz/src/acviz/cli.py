"""Command-line wrapper: one subcommand per figure style."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .plots import PlotJob, PlotKind, plot_convergence, plot_heatmap_grid, plot_speedup, plot_stability_band


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acviz", description="Render figures from run directories.")
    sub = parser.add_subparsers(dest="command", required=True)

    heat = sub.add_parser("heatmap", help="solution and error panels at selected times")
    heat.add_argument("run_dir")
    heat.add_argument("--reference", required=True, help="run directory providing the reference fields")
    heat.add_argument("--times", help="comma-separated times (default: every snapshot)")
    heat.add_argument("--out", default="heatmap.png")

    conv = sub.add_parser("convergence", help="increment and error curves vs iteration")
    conv.add_argument("run_dir")
    conv.add_argument("--out", default="convergence.png")

    stab = sub.add_parser("stability", help="mean/std band of rollout errors")
    stab.add_argument("run_dir")
    stab.add_argument("--csv", default="stability.csv")
    stab.add_argument("--out", default="stability.png")

    speed = sub.add_parser("speedup", help="wall time per iteration and worker count")
    speed.add_argument("run_dir")
    speed.add_argument("--csv", default="bench.csv")
    speed.add_argument("--out", default="speedup.png")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    run_dir = Path(args.run_dir)
    try:
        if args.command == "heatmap":
            times = [float(t) for t in args.times.split(",")] if args.times else None
            job = PlotJob(run_dir, PlotKind.HEATMAP_GRID, Path(args.out), times=times,
                          reference_dir=Path(args.reference))
            result = plot_heatmap_grid(job)
            if result["missing"]:
                print(f"skipped times with no snapshot: {result['missing']}", file=sys.stderr)
        elif args.command == "convergence":
            result = plot_convergence(PlotJob(run_dir, PlotKind.CONVERGENCE, Path(args.out)))
        elif args.command == "stability":
            result = plot_stability_band(
                PlotJob(run_dir, PlotKind.STABILITY_BAND, Path(args.out)), csv_name=args.csv
            )
        else:
            result = plot_speedup(PlotJob(run_dir, PlotKind.SPEEDUP, Path(args.out)), csv_name=args.csv)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(result["output"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
