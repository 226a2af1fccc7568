"""Command-line front end.

Stages mirror an SDR workflow: `simulate` writes raw I/Q captures, `detect`
turns a capture into a detection series, `track` turns detections into a
trajectory, and `pipeline` streams all three without materializing samples.
`report` renders figures from a finished run directory.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .detect import read_detections_csv, run_detection, write_detections_csv
from .errors import ConfigError, DopptrackError
from .pipeline import (
    bundled_scenario_path,
    error_cdf,
    load_scenario,
    run_pipeline,
    run_sweep,
    write_error_cdf_csv,
)
from .smooth import smooth_series
from .synth import read_capture, synthesize_capture, write_capture
from .track import track_trajectory, write_track_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _scenario(args):
    path = Path(args.config)
    if not path.exists() and not path.suffix:
        path = bundled_scenario_path(args.config)
    scenario = load_scenario(path)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    return scenario


def _cmd_validate(args) -> int:
    scenario = _scenario(args)
    radio = scenario.radio
    k_count = int(round(scenario.duration_s / radio.sample_period_s)) \
        // radio.samples_per_interval
    print(f"{scenario.name}: ok")
    print(f"  duration {scenario.duration_s} s, {k_count} detection instants")
    print(f"  window {radio.effective_window_len} of "
          f"{radio.samples_per_interval} samples per interval")
    print(f"  wavelength {scenario.scene.wavelength_m:.6g} m")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    scenario = _scenario(args)
    capture = synthesize_capture(scenario.scene, scenario.trajectory,
                                 scenario.radio, duration_s=scenario.duration_s)
    sidecar = write_capture(capture, args.out_dir)
    if not args.quiet:
        print(sidecar)
    return EXIT_OK


def _cmd_detect(args) -> int:
    scenario = _scenario(args)
    capture = read_capture(args.capture)
    series = run_detection(capture, scenario.scene, scenario.trajectory,
                           scenario.detector)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = write_detections_csv(series, out_dir / "detections_raw.csv")
    if not args.quiet:
        print(path)
    return EXIT_OK


def _cmd_track(args) -> int:
    scenario = _scenario(args)
    raw = read_detections_csv(args.detections)
    smoothed = smooth_series(raw, scenario.smoother)
    estimate = track_trajectory(scenario.scene, smoothed, scenario.solver,
                                scenario.trajectory)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = [
        write_detections_csv(smoothed, out_dir / "detections_smoothed.csv"),
        write_track_csv(estimate, out_dir / "track.csv"),
    ]
    errs = estimate.errors_m()
    if np.isfinite(errs).all():
        files.append(write_error_cdf_csv(error_cdf(errs), out_dir / "error_cdf.csv"))
    if not args.quiet:
        for path in files:
            print(path)
    return EXIT_OK


def _cmd_pipeline(args) -> int:
    scenario = _scenario(args)
    result = run_pipeline(scenario, args.out_dir, quiet=args.quiet)
    if args.report:
        from .report import render_report

        for path in render_report(args.out_dir):
            result.files[f"figure_{path.stem}"] = path
    if not args.quiet:
        for path in sorted(set(result.files.values())):
            print(path)
    return EXIT_OK


def _cmd_report(args) -> int:
    from .report import render_report

    for path in render_report(args.run_dir):
        if not args.quiet:
            print(path)
    return EXIT_OK


def _parse_override_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _cmd_sweep(args) -> int:
    path = Path(args.config)
    if not path.exists() and not path.suffix:
        path = bundled_scenario_path(args.config)
    try:
        base = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(str(path), "scenario file not found") from None
    grid = []
    for spec in args.param or []:
        dotted, _, values = spec.partition("=")
        if not values:
            raise ConfigError(spec, "expected dotted.path=v1,v2,...")
        points = [_parse_override_value(v) for v in values.split(",")]
        if not grid:
            grid = [{dotted: v} for v in points]
        else:
            grid = [dict(g, **{dotted: v}) for g in grid for v in points]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = run_sweep(base, grid, args.reps, out_dir / "sweep.csv",
                         name=path.stem, workers=args.workers)
    if not args.quiet:
        print(csv_path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dopptrack",
        description="Multipath-Doppler trajectory tracking: simulate, "
                    "detect, smooth, solve.",
    )
    parser.add_argument("--quiet", action="store_true",
                        help="suppress progress and file listings")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, config=True, out_dir=True):
        p = sub.add_parser(name, help=help_text)
        if config:
            p.add_argument("--config", required=True,
                           help="scenario JSON path or bundled scenario name")
            p.add_argument("--seed", type=int, default=None,
                           help="override the scenario seed")
        if out_dir:
            p.add_argument("--out-dir", required=True)
        p.set_defaults(fn=fn)
        return p

    add("validate-config", _cmd_validate, "parse a scenario and print a summary",
        out_dir=False)
    add("simulate", _cmd_simulate, "synthesize and write I/Q capture files")
    p = add("detect", _cmd_detect, "run the detector over a stored capture")
    p.add_argument("--capture", required=True, help="capture sidecar JSON path")
    p = add("track", _cmd_track, "smooth a detection series and solve the track")
    p.add_argument("--detections", required=True, help="raw detections CSV path")
    p = add("pipeline", _cmd_pipeline, "full streaming run: synth > detect > track")
    p.add_argument("--report", action="store_true",
                   help="also render figures into the output directory")
    p = add("report", _cmd_report, "render figures for a finished run",
            config=False, out_dir=False)
    p.add_argument("--run-dir", required=True)
    p = add("sweep", _cmd_sweep, "repeat the pipeline over a parameter grid")
    p.add_argument("--param", action="append", metavar="PATH=V1,V2,...",
                   help="dotted config path with comma-separated values; "
                        "repeat for a cross product")
    p.add_argument("--reps", type=int, default=1,
                   help="repetitions per grid point with derived seeds")
    p.add_argument("--workers", type=int, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DopptrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
