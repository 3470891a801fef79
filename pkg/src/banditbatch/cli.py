"""Command-line entry points: ``run`` an experiment, ``analyze`` its records."""

from __future__ import annotations

import argparse
import sys

from .analysis import load_runs
from .config import parse_config
from .harness import run_experiment
from .plots import FIGURE_FAMILIES, emit_plots


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="banditbatch",
        description="Bandit-driven minibatch selection experiments and reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute the runs described by a config file")
    run_p.add_argument("--config", required=True, help="path to a key/value config file")
    run_p.add_argument("--seeds", help="comma-separated seed override, e.g. 1,2,3")
    run_p.add_argument("--out", help="output directory override")

    an_p = sub.add_parser("analyze", help="build CSV tables and SVG figures from runs")
    an_p.add_argument("--runs", required=True, help="directory of run record files")
    an_p.add_argument("--out", required=True, help="directory for tables and figures")
    an_p.add_argument(
        "--figures",
        default="errors,occurrence,overlay,entropy",
        help=f"comma-separated families from {','.join(FIGURE_FAMILIES)}",
    )
    an_p.add_argument(
        "--window",
        type=int,
        help="sliding-window width for the mislabeled overlay (default scales with N)",
    )
    an_p.add_argument(
        "--occurrence-epochs",
        type=int,
        default=1,
        help="epochs in the first/last occurrence windows (default 1)",
    )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        try:
            config = parse_config(args.config)
        except (OSError, ValueError) as exc:
            print(str(exc), file=sys.stderr)
            return 2
        seeds = None
        if args.seeds:
            seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
        summaries = run_experiment(config, out_dir=args.out, seeds=seeds, echo=print)
        failed = [s for s in summaries if not s["ok"]]
        print(f"{len(summaries) - len(failed)}/{len(summaries)} runs completed")
        return 1 if failed else 0

    figures = tuple(f.strip() for f in args.figures.split(",") if f.strip())
    for family in figures:
        if family not in FIGURE_FAMILIES:
            print(f"unknown figure family {family!r}", file=sys.stderr)
            return 2
    try:
        runs = load_runs(args.runs)
        produced = emit_plots(
            runs,
            args.out,
            figures=figures,
            window=args.window,
            occurrence_epochs=args.occurrence_epochs,
        )
    except (FileNotFoundError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return 2
    for path in produced:
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
