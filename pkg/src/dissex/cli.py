"""Command-line entry point: ``dissex <command> --scenario file.json``."""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .reports import COMMANDS, EXIT_INVALID, RunFlags, emit, error_report, plot_spectrum, run
from .scenario import ScenarioError, load_scenario


def _box(text):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("box must be four comma-separated numbers") from None
    if len(vals) != 4 or not (vals[0] < vals[1] and vals[2] <= vals[3]):
        raise argparse.ArgumentTypeError("box must be re0,re1,im0,im1 with re0 < re1 and im0 <= im1")
    return vals


def build_parser():
    ap = argparse.ArgumentParser(prog="dissex", description="Dissipative extensions of -d2/dx2 + iV on [0, 1].")
    ap.add_argument("command", choices=COMMANDS)
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="scenario JSON file")
    src.add_argument("--batch", help="directory of scenario JSON files, processed in parallel")
    ap.add_argument("--grid", type=int, help="override grid_n")
    ap.add_argument("--box", type=_box, help="search box re0,re1,im0,im1")
    ap.add_argument("--out", help="output directory (default: stdout)")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    ap.add_argument("--require-dissipative", action="store_true",
                    help="exit with status 3 when the model is not dissipative")
    ap.add_argument("--no-timings", action="store_true", help="omit timings for byte-stable output")
    ap.add_argument("--plot", action="store_true", help="also write a PNG of the eigenvalues (needs matplotlib)")
    ap.add_argument("--workers", type=int, default=None, help="batch worker processes")
    return ap


def _one(command, path, flags):
    try:
        scenario = load_scenario(path)
    except ScenarioError as exc:
        return error_report(command, exc)
    except OSError as exc:
        return error_report(command, ScenarioError("", f"cannot read {path}: {exc.strerror}"))
    return run(command, scenario, flags)


def _write(report, args, stem):
    ext = "json" if args.format == "json" else "csv"
    if args.out is None:
        sys.stdout.write(emit(report, args.format))
        return
    os.makedirs(args.out, exist_ok=True)
    emit(report, args.format, os.path.join(args.out, f"{stem}.{args.command}.{ext}"))
    if args.plot and report.rows:
        plot_spectrum(report, os.path.join(args.out, f"{stem}.{args.command}.png"))


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.grid is not None and args.grid < 16:
        print("dissex: --grid must be at least 16", file=sys.stderr)
        return EXIT_INVALID
    flags = RunFlags(args.grid, args.box, args.require_dissipative, not args.no_timings)
    if args.scenario is not None:
        report = _one(args.command, args.scenario, flags)
        _write(report, args, _stem(args.scenario))
        return report.exit_code
    if not os.path.isdir(args.batch):
        print(f"dissex: {args.batch} is not a directory", file=sys.stderr)
        return EXIT_INVALID
    paths = sorted(os.path.join(args.batch, f) for f in os.listdir(args.batch) if f.endswith(".json"))
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        reports = list(pool.map(_one, [args.command] * len(paths), paths, [flags] * len(paths)))
    for path, report in zip(paths, reports):
        _write(report, args, _stem(path))
    return max((r.exit_code for r in reports), default=0)


if __name__ == "__main__":
    sys.exit(main())
