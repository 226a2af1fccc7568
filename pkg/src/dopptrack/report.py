"""Figure rendering for pipeline run directories.

Every function reads the delimited products written by `run_pipeline` and
renders one PNG next to them, so reports can be (re)built without touching
sample data or rerunning the estimators.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .detect import read_detections_csv
from .errors import PipelineError
from .track import read_track_csv

DPI = 150


def _load_manifest(run_dir: Path) -> dict:
    path = run_dir / "manifest.json"
    if not path.exists():
        raise PipelineError("report", f"no manifest.json in {run_dir}")
    return json.loads(path.read_text())


def _wall_segment(anchor, normal, reach: float):
    # walls are infinite lines; draw the stretch of the tangent line that
    # covers the plotted area
    tx, ty = -normal[1], normal[0]
    ax, ay = anchor
    return ([ax - reach * tx, ax + reach * tx], [ay - reach * ty, ay + reach * ty])


def trajectory_figure(run_dir, out_path=None) -> Path:
    """True vs estimated path in the room, walls and BS included."""
    run_dir = Path(run_dir)
    manifest = _load_manifest(run_dir)
    track = read_track_csv(run_dir / "track.csv")

    est = track["positions_m"]
    truth = track["true_positions_m"]

    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    if np.isfinite(truth).all():
        ax.plot(truth[:, 0], truth[:, 1], "-", color="0.4", lw=1.2,
                label="ground truth")
    ax.plot(est[:, 0], est[:, 1], ".", ms=3, color="tab:red", label="estimate")
    ax.plot(0, 0, "^", ms=9, color="tab:blue", label="BS")
    reach = 1.5 * max(np.nanmax(np.abs(est[:, 0])), np.nanmax(np.abs(est[:, 1])), 1.0)
    for wall in manifest.get("scene", {}).get("walls", []):
        xs, ys = _wall_segment(wall["anchor_m"], wall["normal"], reach)
        ax.plot(xs, ys, "-", color="0.2", lw=2.5)
    ax.plot(est[0, 0], est[0, 1], "o", ms=7, mfc="none", color="tab:red",
            label="initial estimate")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(f"{manifest['scenario']}: trajectory")
    out = Path(out_path) if out_path else run_dir / "trajectory.png"
    fig.savefig(out, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return out


def detections_figure(run_dir, out_path=None) -> Path:
    """Raw vs smoothed Doppler differences and bearing over time."""
    run_dir = Path(run_dir)
    raw = read_detections_csv(run_dir / "detections_raw.csv")
    smooth = read_detections_csv(run_dir / "detections_smoothed.csv")
    times = raw.times_s()

    fig, axes = plt.subplots(3, 1, figsize=(7.0, 7.5), sharex=True)
    for idx, ax in enumerate(axes[:2]):
        ax.plot(times, raw.mddoa_hz[:, idx], ".", ms=2.5, color="0.6",
                label="raw")
        ax.plot(times, smooth.mddoa_hz[:, idx], "-", lw=1.3, color="tab:red",
                label="smoothed")
        ax.set_ylabel(f"path {idx + 2} MDDoA [Hz]")
        ax.legend(loc="best", fontsize=8)
    axes[2].plot(times, np.degrees(raw.aoa_rad), ".", ms=2.5, color="0.6",
                 label="raw")
    axes[2].plot(times, np.degrees(smooth.aoa_rad), "-", lw=1.3,
                 color="tab:red", label="smoothed")
    axes[2].set_ylabel("LoS AoA [deg]")
    axes[2].set_xlabel("t [s]")
    axes[2].legend(loc="best", fontsize=8)
    fig.align_ylabels(axes)
    out = Path(out_path) if out_path else run_dir / "detections.png"
    fig.savefig(out, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return out


def error_cdf_figure(run_dir, out_path=None) -> Path:
    run_dir = Path(run_dir)
    errs, cdf = [], []
    with (run_dir / "error_cdf.csv").open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            errs.append(float(row[0]))
            cdf.append(float(row[1]))

    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.step(errs, cdf, where="post", lw=1.5)
    ax.axhline(0.9, color="0.6", ls="--", lw=0.8)
    ax.set_xlabel("position error [m]")
    ax.set_ylabel("CDF")
    ax.set_ylim(0.0, 1.02)
    ax.grid(alpha=0.3)
    out = Path(out_path) if out_path else run_dir / "error_cdf.png"
    fig.savefig(out, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return out


def _read_spectrogram(path: Path):
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        freqs = np.array([float(c) for c in header[2:]])
        times, rows = [], []
        for row in reader:
            times.append(float(row[1]))
            rows.append([float(c) for c in row[2:]])
    return np.array(times), freqs, np.array(rows)


def spectrogram_figure(run_dir, path_index: int, out_path=None) -> Path:
    """CAF magnitude around zero Doppler difference versus time."""
    run_dir = Path(run_dir)
    src = run_dir / f"spectrogram_path{path_index}.csv"
    times, freqs, mags = _read_spectrogram(src)

    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    db = 20.0 * np.log10(np.maximum(mags, 1e-12))
    mesh = ax.pcolormesh(times, freqs, db.T, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="|CAF| [dB]")
    ax.set_xlabel("t [s]")
    ax.set_ylabel(f"path {path_index} Doppler difference [Hz]")
    out = Path(out_path) if out_path else run_dir / f"spectrogram_path{path_index}.png"
    fig.savefig(out, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return out


def render_report(run_dir) -> list[Path]:
    """Render every figure a run directory supports; returns written paths."""
    run_dir = Path(run_dir)
    written = [
        trajectory_figure(run_dir),
        detections_figure(run_dir),
        error_cdf_figure(run_dir),
    ]
    for path_index in (2, 3):
        if (run_dir / f"spectrogram_path{path_index}.csv").exists():
            written.append(spectrogram_figure(run_dir, path_index))
    return written
