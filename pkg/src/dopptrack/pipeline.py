"""Scenario configuration and the end-to-end processing pipeline.

A scenario JSON file describes scene, trajectory, radio, detector, smoother
and solver in physical units.  `run_pipeline` synthesizes the capture one
detection interval at a time, detects and smooths the Doppler-difference
series, recovers the trajectory and writes every product as delimited text
plus a deterministic JSON manifest, so long captures never have to fit in
memory.
"""

from __future__ import annotations

import csv
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .detect import (
    DetectionSeries,
    DetectorConfig,
    detect_window,
    observe_aoa,
    write_detections_csv,
)
from .errors import ConfigError, PipelineError
from .scene import Point2, Scene, Trajectory, Wall
from .smooth import SmootherConfig, smooth_series
from .synth import BlockSynthesizer, CfoModel, RadioConfig
from .track import SolverConfig, TrackEstimate, track_trajectory, write_track_csv

DEFAULT_SPECTROGRAM_BAND_HZ = 500.0

_UNSET = object()


@dataclass(frozen=True)
class OutputOptions:
    save_capture: bool = False
    spectrogram_band_hz: float = DEFAULT_SPECTROGRAM_BAND_HZ

    def __post_init__(self):
        if self.spectrogram_band_hz <= 0:
            raise ValueError("spectrogram_band_hz must be positive")


@dataclass(frozen=True)
class Scenario:
    """Fully resolved simulation description."""

    name: str
    seed: int
    scene: Scene
    trajectory: Trajectory
    radio: RadioConfig
    detector: DetectorConfig
    smoother: SmootherConfig
    solver: SolverConfig
    duration_s: float
    outputs: OutputOptions = OutputOptions()

    def with_seed(self, seed: int) -> "Scenario":
        return replace(
            self,
            seed=seed,
            radio=replace(self.radio, seed=seed),
            detector=replace(self.detector, aoa_seed=seed),
        )


class _Section:
    """Typed accessor over one nested dict, tracking its dotted path."""

    def __init__(self, data: dict, path: str = ""):
        if not isinstance(data, dict):
            raise ConfigError(path or "<root>", "expected an object")
        self.data = data
        self.path = path
        self.seen = set()

    def _key(self, name):
        return f"{self.path}.{name}" if self.path else name

    def get(self, name, kind, default=_UNSET, allow_none=False):
        self.seen.add(name)
        if name not in self.data:
            if default is _UNSET:
                raise ConfigError(self._key(name), "missing required field")
            return default
        val = self.data[name]
        if val is None:
            if allow_none:
                return None
            raise ConfigError(self._key(name), "must not be null")
        if kind is float:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(self._key(name), f"expected a number, got {val!r}")
            if not math.isfinite(val):
                raise ConfigError(self._key(name), "must be finite")
            return float(val)
        if kind is int:
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(self._key(name), f"expected an integer, got {val!r}")
            return val
        if kind is bool:
            if not isinstance(val, bool):
                raise ConfigError(self._key(name), f"expected true/false, got {val!r}")
            return val
        if kind is str:
            if not isinstance(val, str):
                raise ConfigError(self._key(name), f"expected a string, got {val!r}")
            return val
        if kind is list:
            if not isinstance(val, list):
                raise ConfigError(self._key(name), f"expected a list, got {val!r}")
            return val
        raise AssertionError(f"unhandled kind {kind}")

    def section(self, name, required=True):
        self.seen.add(name)
        if name not in self.data or self.data[name] is None:
            if required:
                raise ConfigError(self._key(name), "missing required section")
            return _Section({}, self._key(name))
        return _Section(self.data[name], self._key(name))

    def reject_unknown(self):
        unknown = set(self.data) - self.seen
        if unknown:
            raise ConfigError(self._key(sorted(unknown)[0]), "unknown field")

    def numbers(self, name, count, default=_UNSET, allow_none=False):
        self.seen.add(name)
        if name not in self.data:
            if default is _UNSET:
                raise ConfigError(self._key(name), "missing required field")
            return default
        val = self.data[name]
        if val is None:
            if allow_none:
                return None
            raise ConfigError(self._key(name), "must not be null")
        ok = isinstance(val, list) and len(val) == count and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
            for v in val
        )
        if not ok:
            raise ConfigError(self._key(name), f"expected {count} finite numbers")
        return tuple(float(v) for v in val)


def _build(path, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def scenario_from_dict(data: dict, name_hint: str = "scenario") -> Scenario:
    root = _Section(data)
    name = root.get("name", str, default=name_hint)
    seed = root.get("seed", int, default=0)
    duration = root.get("duration_s", float, default=None, allow_none=True)

    sc = root.section("scene")
    carrier = sc.get("carrier_hz", float)
    walls_raw = sc.get("walls", list)
    if len(walls_raw) != 2:
        raise ConfigError("scene.walls", "exactly two walls required")
    walls = []
    for i, w in enumerate(walls_raw):
        ws = _Section(w, f"scene.walls[{i}]")
        anchor = ws.numbers("anchor_m", 2)
        normal = ws.numbers("normal", 2)
        ws.reject_unknown()
        walls.append(
            _build(f"scene.walls[{i}]", Wall, Point2(*anchor), (normal[0], normal[1]))
        )
    sc.reject_unknown()
    scene = _build("scene", Scene.from_walls, tuple(walls), carrier)

    tj = root.section("trajectory")
    wps_raw = tj.get("waypoints", list)
    interp = tj.get("interpolation", str, default="linear")
    tj.reject_unknown()
    waypoints = []
    for i, item in enumerate(wps_raw):
        ok = (
            isinstance(item, list) and len(item) == 2
            and isinstance(item[0], (int, float)) and not isinstance(item[0], bool)
            and isinstance(item[1], list) and len(item[1]) == 2
        )
        if not ok:
            raise ConfigError(
                f"trajectory.waypoints[{i}]", "expected [t_s, [x_m, y_m]]"
            )
        waypoints.append((float(item[0]), (float(item[1][0]), float(item[1][1]))))
    traj = _build("trajectory", Trajectory, waypoints, interp)

    rd = root.section("radio")
    cfo_sec = rd.section("cfo", required=False)
    cfo = _build(
        "radio.cfo", CfoModel,
        offset_hz=cfo_sec.get("offset_hz", float, default=0.0, allow_none=True),
        phase_walk_std=cfo_sec.get("phase_walk_std", float, default=0.0),
    )
    cfo_sec.reject_unknown()
    window_len = rd.get("window_len", int, default=None, allow_none=True)
    radio = _build(
        "radio", RadioConfig,
        carrier_hz=carrier,
        sample_period_s=rd.get("sample_period_s", float),
        detection_interval_s=rd.get("detection_interval_s", float),
        window_len=window_len,
        path_gains=rd.numbers("path_gains", 3, default=(1.0, 0.5, 0.5)),
        initial_phases=rd.numbers("initial_phases_rad", 3, default=(0.0, 0.0, 0.0)),
        cfo=cfo,
        snr_db=rd.numbers("snr_db", 3, default=None, allow_none=True),
        seed=seed,
    )
    rd.reject_unknown()

    dt = root.section("detector", required=False)
    detector = _build(
        "detector", DetectorConfig,
        gamma=dt.get("gamma", float, default=1.5),
        half_train=dt.get("half_train", int, default=16),
        decimation=dt.get("decimation", int, default=8),
        zero_pad_factor=dt.get("zero_pad_factor", int, default=4),
        parabolic_interp=dt.get("parabolic_interp", bool, default=False),
        aoa_noise_std_rad=math.radians(dt.get("aoa_noise_std_deg", float, default=0.0)),
        aoa_quant_step_rad=math.radians(dt.get("aoa_quant_step_deg", float, default=0.0)),
        aoa_seed=seed,
    )
    dt.reject_unknown()

    sm = root.section("smoother", required=False)
    smoother = _build(
        "smoother", SmootherConfig,
        window=sm.get("window", int, default=11),
        order=sm.get("order", int, default=2),
        fill_gaps=sm.get("fill_gaps", bool, default=True),
    )
    sm.reject_unknown()

    so = root.section("solver", required=False)
    doppler_scale = so.get("doppler_scale_hz", float, default=None, allow_none=True)
    if doppler_scale is None:
        # default to the detector's frequency resolution
        doppler_scale = 1.0 / (radio.effective_window_len * radio.sample_period_s)
    aoa_scale = so.get("aoa_scale_rad", float, default=None, allow_none=True)
    if aoa_scale is None:
        aoa_scale = max(detector.aoa_noise_std_rad, math.radians(1.0))
    solver = _build(
        "solver", SolverConfig,
        weights_init=so.numbers("weights_init", 4, default=(1.0, 1.0, 1.0, 1.0)),
        weights_track=so.numbers("weights_track", 3, default=(1.0, 1.0, 1.0)),
        grad_tol=so.get("grad_tol", float, default=1e-9),
        max_iters=so.get("max_iters", int, default=100),
        damping0=so.get("damping0", float, default=1e-3),
        init_range_m=so.get("init_range_m", float, default=2.0),
        multistart=so.get("multistart", int, default=5),
        doppler_scale_hz=doppler_scale,
        aoa_scale_rad=aoa_scale,
    )
    so.reject_unknown()

    ou = root.section("outputs", required=False)
    outputs = _build(
        "outputs", OutputOptions,
        save_capture=ou.get("save_capture", bool, default=False),
        spectrogram_band_hz=ou.get(
            "spectrogram_band_hz", float, default=DEFAULT_SPECTROGRAM_BAND_HZ
        ),
    )
    ou.reject_unknown()
    root.reject_unknown()

    if duration is None:
        duration = traj.duration
    if duration <= 0:
        raise ConfigError("duration_s", "must be positive")
    if duration > traj.duration * (1 + 1e-12):
        raise ConfigError(
            "duration_s", f"exceeds trajectory duration {traj.duration}"
        )
    k_count = int(round(duration / radio.sample_period_s)) // radio.samples_per_interval
    if k_count < 2:
        raise ConfigError(
            "duration_s", "capture must span at least two detection intervals"
        )

    return Scenario(
        name=name, seed=seed, scene=scene, trajectory=traj, radio=radio,
        detector=detector, smoother=smoother, solver=solver,
        duration_s=duration, outputs=outputs,
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    """Serialize a resolved scenario back into its JSON schema.

    Every field carries its resolved value (defaults filled in, window
    length expanded), so the output parses back to an equivalent scenario
    and records exactly the knobs a run used.
    """
    scene, radio, det = scenario.scene, scenario.radio, scenario.detector
    return {
        "name": scenario.name,
        "seed": scenario.seed,
        "duration_s": scenario.duration_s,
        "scene": {
            "carrier_hz": scene.carrier_hz,
            "walls": [
                {"anchor_m": [w.anchor.x, w.anchor.y], "normal": list(w.normal)}
                for w in scene.walls
            ],
        },
        "trajectory": {
            "waypoints": [[t, [p.x, p.y]] for t, p in scenario.trajectory.waypoints],
            "interpolation": scenario.trajectory.interpolation,
        },
        "radio": {
            "sample_period_s": radio.sample_period_s,
            "detection_interval_s": radio.detection_interval_s,
            "window_len": radio.effective_window_len,
            "path_gains": list(radio.path_gains),
            "initial_phases_rad": list(radio.initial_phases),
            "cfo": {
                "offset_hz": radio.cfo.offset_hz,
                "phase_walk_std": radio.cfo.phase_walk_std,
            },
            "snr_db": None if radio.snr_db is None else list(radio.snr_db),
        },
        "detector": {
            "gamma": det.gamma,
            "half_train": det.half_train,
            "decimation": det.decimation,
            "zero_pad_factor": det.zero_pad_factor,
            "parabolic_interp": det.parabolic_interp,
            "aoa_noise_std_deg": math.degrees(det.aoa_noise_std_rad),
            "aoa_quant_step_deg": math.degrees(det.aoa_quant_step_rad),
        },
        "smoother": {
            "window": scenario.smoother.window,
            "order": scenario.smoother.order,
            "fill_gaps": scenario.smoother.fill_gaps,
        },
        "solver": {
            "weights_init": list(scenario.solver.weights_init),
            "weights_track": list(scenario.solver.weights_track),
            "grad_tol": scenario.solver.grad_tol,
            "max_iters": scenario.solver.max_iters,
            "damping0": scenario.solver.damping0,
            "init_range_m": scenario.solver.init_range_m,
            "multistart": scenario.solver.multistart,
            "doppler_scale_hz": scenario.solver.doppler_scale_hz,
            "aoa_scale_rad": scenario.solver.aoa_scale_rad,
        },
        "outputs": {
            "save_capture": scenario.outputs.save_capture,
            "spectrogram_band_hz": scenario.outputs.spectrogram_band_hz,
        },
    }


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(str(path), "scenario file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
    return scenario_from_dict(data, name_hint=path.stem)


def bundled_scenario_path(name: str) -> Path:
    p = Path(__file__).parent / "scenarios" / f"{name}.json"
    if not p.exists():
        have = sorted(q.stem for q in p.parent.glob("*.json"))
        raise ConfigError(name, f"no bundled scenario by that name; have {have}")
    return p


def percentile_nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    """Nearest-rank percentile of an ascending array, q in (0, 100]."""
    if len(sorted_values) == 0:
        raise ValueError("empty sample")
    if not 0 < q <= 100:
        raise ValueError("q must be in (0, 100]")
    rank = max(1, math.ceil(q / 100.0 * len(sorted_values)))
    return float(sorted_values[rank - 1])


def error_cdf(errors_m: np.ndarray) -> dict:
    """Sorted errors with empirical CDF plus nearest-rank summary points."""
    errs = np.sort(np.asarray(errors_m, dtype=float))
    if len(errs) == 0 or not np.all(np.isfinite(errs)):
        raise ValueError("errors must be finite and non-empty")
    cdf = np.arange(1, len(errs) + 1) / len(errs)
    return {
        "err_m": errs,
        "cdf": cdf,
        "p50_m": percentile_nearest_rank(errs, 50),
        "p90_m": percentile_nearest_rank(errs, 90),
        "p95_m": percentile_nearest_rank(errs, 95),
        "max_m": float(errs[-1]),
    }


def write_error_cdf_csv(cdf: dict, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("err_m,cdf\n")
        for e, c in zip(cdf["err_m"], cdf["cdf"]):
            fh.write(f"{float(e)!r},{float(c)!r}\n")
    return path


@dataclass
class PipelineResult:
    scenario: Scenario
    raw_series: DetectionSeries
    smoothed_series: DetectionSeries
    estimate: TrackEstimate
    cdf: dict
    cfo_offset_hz: float
    files: dict


def _write_spectrogram_csv(path, times_s, freqs_hz, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("k,t_s," + ",".join(repr(float(f)) for f in freqs_hz) + "\n")
        for k, (t, row) in enumerate(zip(times_s, rows)):
            fh.write(f"{k},{float(t)!r}," + ",".join(repr(float(v)) for v in row) + "\n")
    return path


def run_pipeline(scenario: Scenario, out_dir, quiet: bool = True) -> PipelineResult:
    """Synthesize, detect, smooth, track and write all products.

    Capture samples stream through one detection interval at a time; only
    the detection series and band-limited spectrogram rows are kept.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene, traj, radio = scenario.scene, scenario.trajectory, scenario.radio
    n0 = radio.samples_per_interval
    nw = radio.effective_window_len
    k_count = int(round(scenario.duration_s / radio.sample_period_s)) // n0

    say = (lambda *_: None) if quiet else print
    say(f"[{scenario.name}] synthesizing {k_count} detection intervals")

    synth = BlockSynthesizer(scene, traj, radio)
    mddoa = np.full((k_count, 2), np.nan)
    valid = np.zeros((k_count, 2), dtype=bool)
    aoa = np.empty(k_count)
    spect_rows = {2: [], 3: []}
    spect_freqs = None
    band = scenario.outputs.spectrogram_band_hz

    capture_files = None
    handles = []
    try:
        if scenario.outputs.save_capture:
            capture_files = [out_dir / f"capture_path{i}.iq" for i in (1, 2, 3)]
            handles = [p.open("wb") for p in capture_files]
        for k in range(k_count):
            block = synth.next_block(k * n0, n0)
            (f2, v2), (f3, v3), spectra = detect_window(
                block[:, :nw], radio.sample_period_s, scenario.detector
            )
            if v2:
                mddoa[k, 0] = f2
            if v3:
                mddoa[k, 1] = f3
            valid[k] = (v2, v3)
            aoa[k] = observe_aoa(
                scene, traj, k, radio.detection_interval_s, scenario.detector
            )
            for path_idx, spec in zip((2, 3), spectra):
                freqs, mags = spec.band(-band, band)
                if spect_freqs is None:
                    spect_freqs = freqs
                spect_rows[path_idx].append(mags)
            for h, stream in zip(handles, block):
                iq = np.empty(2 * len(stream), dtype="<f4")
                iq[0::2] = stream.real
                iq[1::2] = stream.imag
                iq.tofile(h)
    finally:
        for h in handles:
            h.close()

    raw = DetectionSeries(radio.detection_interval_s, mddoa, valid, aoa)
    say(f"[{scenario.name}] detected; {int(valid.sum())}/{valid.size} windows valid")
    smoothed = smooth_series(raw, scenario.smoother)
    estimate = track_trajectory(scene, smoothed, scenario.solver, traj)
    cdf = error_cdf(estimate.errors_m())
    say(
        f"[{scenario.name}] tracked; p90 error {cdf['p90_m']:.3f} m, "
        f"init error {estimate.errors_m()[0]:.3f} m"
    )

    files = {
        "detections_raw": write_detections_csv(raw, out_dir / "detections_raw.csv"),
        "detections_smoothed": write_detections_csv(
            smoothed, out_dir / "detections_smoothed.csv"
        ),
        "track": write_track_csv(estimate, out_dir / "track.csv"),
        "error_cdf": write_error_cdf_csv(cdf, out_dir / "error_cdf.csv"),
    }
    times = raw.times_s()
    for path_idx in (2, 3):
        files[f"spectrogram_path{path_idx}"] = _write_spectrogram_csv(
            out_dir / f"spectrogram_path{path_idx}.csv",
            times, spect_freqs, spect_rows[path_idx],
        )
    # sidecar is written even without samples so every run documents its capture
    sidecar = {
        "format": "interleaved float32 I/Q, little-endian",
        "files": [] if capture_files is None else [p.name for p in capture_files],
        "sample_period_s": radio.sample_period_s,
        "carrier_hz": radio.carrier_hz,
        "stream_len": k_count * n0,
        "num_detection_instants": k_count,
        "samples_per_interval": n0,
        "window_len": nw,
        "seed": radio.seed,
        "cfo_offset_hz": synth.cfo_offset_hz,
    }
    cap_path = out_dir / "capture.json"
    cap_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    files["capture"] = cap_path

    from . import __version__
    import scipy

    manifest = {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "config": scenario_to_dict(scenario),
        "versions": {
            "python": platform.python_version(),
            "dopptrack": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "scene": {
            "carrier_hz": scene.carrier_hz,
            "walls": [
                {"anchor_m": [w.anchor.x, w.anchor.y], "normal": list(w.normal)}
                for w in scene.walls
            ],
            "virtual_bs_m": [[p.x, p.y] for p in scene.virtual_bs],
        },
        "duration_s": scenario.duration_s,
        "num_detection_instants": k_count,
        "samples_per_interval": n0,
        "window_len": nw,
        "cfo_offset_hz": synth.cfo_offset_hz,
        "caf_grid_spacing_hz": 1.0
        / (scenario.detector.zero_pad_factor * (nw // scenario.detector.decimation)
           * scenario.detector.decimation * radio.sample_period_s),
        "valid_fraction": float(valid.mean()),
        "initial": {
            "x_m": estimate.initial.p0.x,
            "y_m": estimate.initial.p0.y,
            "error_m": float(estimate.errors_m()[0]),
            "iterations": estimate.initial.iterations,
            "start_multiplier": estimate.initial.start_multiplier,
        },
        "errors_m": {
            "p50": cdf["p50_m"], "p90": cdf["p90_m"],
            "p95": cdf["p95_m"], "max": cdf["max_m"],
        },
        "converged_fraction": float(np.mean(estimate.converged)),
        "files": sorted(p.name for p in files.values()),
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    files["manifest"] = manifest_path

    return PipelineResult(
        scenario=scenario, raw_series=raw, smoothed_series=smoothed,
        estimate=estimate, cdf=cdf, cfo_offset_hz=synth.cfo_offset_hz, files=files,
    )


# --- parameter sweeps ---

def set_by_path(data: dict, dotted: str, value):
    """Set a nested dict entry by dotted path, creating objects on the way."""
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, f"{key} is not an object")
    node[keys[-1]] = value


def derive_seed(base_seed: int, point_index: int, rep: int) -> int:
    ss = np.random.SeedSequence([base_seed, point_index, rep])
    return int(ss.generate_state(1, dtype=np.uint64)[0] & 0x7FFFFFFF)


def _sweep_worker(args):
    base_data, point_index, overrides, rep, name = args
    data = json.loads(json.dumps(base_data))
    for dotted, value in overrides:
        set_by_path(data, dotted, value)
    summary = {
        "point": point_index,
        "rep": rep,
        **{dotted: value for dotted, value in overrides},
    }
    try:
        scenario = scenario_from_dict(data, name_hint=name)
        scenario = scenario.with_seed(derive_seed(scenario.seed, point_index, rep))
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            result = run_pipeline(scenario, tmp, quiet=True)
        errs = result.estimate.errors_m()
        summary.update(
            status="ok",
            seed=scenario.seed,
            init_err_m=float(errs[0]),
            p50_m=result.cdf["p50_m"],
            p90_m=result.cdf["p90_m"],
            p95_m=result.cdf["p95_m"],
            max_m=result.cdf["max_m"],
            valid_fraction=float(result.raw_series.valid.mean()),
            converged_fraction=float(np.mean(result.estimate.converged)),
        )
    except Exception as exc:  # failures become rows, not crashes
        summary.update(status=f"failed: {type(exc).__name__}: {exc}", seed=None)
    return summary


def run_sweep(base_data: dict, grid: list[dict], reps: int, out_path,
              name: str = "sweep", workers: int | None = None) -> Path:
    """Run the pipeline over a parameter grid with repeated derived seeds.

    `grid` is a list of {dotted_path: value} override sets (one per point);
    each point runs `reps` times.  Results land in one CSV, one row per run.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if not grid:
        grid = [{}]
    jobs = [
        (base_data, pi, sorted(point.items()), rep, name)
        for pi, point in enumerate(grid)
        for rep in range(reps)
    ]
    if workers is None:
        import os

        workers = min(len(jobs), os.cpu_count() or 1)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_worker, jobs))
    else:
        rows = [_sweep_worker(job) for job in jobs]

    keys = ["point", "rep", "seed", "status"]
    override_keys = sorted({k for row in rows for k in row if "." in k})
    metric_keys = ["init_err_m", "p50_m", "p90_m", "p95_m", "max_m",
                   "valid_fraction", "converged_fraction"]
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = keys + override_keys + metric_keys
        writer.writerow(header)
        for row in rows:
            cells = []
            for key in header:
                val = row.get(key)
                if val is None:
                    cells.append("")
                elif isinstance(val, float):
                    cells.append(repr(float(val)))
                elif isinstance(val, (list, dict)):
                    cells.append(json.dumps(val))
                else:
                    cells.append(str(val))
            writer.writerow(cells)
    return out_path
