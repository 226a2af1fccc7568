"""Doppler-difference detection from conjugate-product spectra.

For each detection instant the product of a reflection-path window with the
conjugate of the LoS window strips the waveform, the carrier offset and every
other common phase term, leaving a complex tone at the Doppler difference of
the two paths.  The tone frequency is recovered from a zero-padded FFT of the
sum-decimated product, gated by a sliding-average threshold so that windows
without a credible peak are flagged invalid instead of reported.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scene import Scene, Trajectory, los_aoa
from .synth import BasebandCapture


@dataclass(frozen=True)
class DetectorConfig:
    """Detection parameters.

    `gamma` scales the sliding-average threshold; a candidate bin must exceed
    gamma times the local mean magnitude (window of `2*half_train + 1` bins,
    truncated at the spectrum edges, test bin included).
    """

    gamma: float = 1.5
    half_train: int = 16
    decimation: int = 8
    zero_pad_factor: int = 4
    parabolic_interp: bool = False
    aoa_noise_std_rad: float = 0.0
    aoa_quant_step_rad: float = 0.0
    aoa_seed: int = 0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.half_train < 1:
            raise ValueError("half_train must be >= 1")
        if self.decimation < 1 or self.zero_pad_factor < 1:
            raise ValueError("decimation and zero_pad_factor must be >= 1")
        if self.aoa_noise_std_rad < 0 or self.aoa_quant_step_rad < 0:
            raise ValueError("AoA noise and quantization must be >= 0")


@dataclass
class CafSpectrum:
    """Magnitude spectrum of one decimated conjugate-product window."""

    freqs_hz: np.ndarray  # monotonically increasing, fftshift order
    magnitude: np.ndarray

    def __post_init__(self):
        if self.freqs_hz.shape != self.magnitude.shape:
            raise ValueError("frequency grid and magnitude must align")

    @property
    def grid_spacing_hz(self) -> float:
        return float(self.freqs_hz[1] - self.freqs_hz[0])

    def band(self, lo_hz: float, hi_hz: float) -> tuple[np.ndarray, np.ndarray]:
        """Slice of the spectrum with lo <= f <= hi."""
        sel = (self.freqs_hz >= lo_hz) & (self.freqs_hz <= hi_hz)
        return self.freqs_hz[sel], self.magnitude[sel]


@dataclass
class DetectionResult:
    freq_hz: float | None
    valid: bool
    peak_index: int | None
    threshold: np.ndarray


def conjugate_product(window_i: np.ndarray, window_los: np.ndarray) -> np.ndarray:
    if window_i.shape != window_los.shape:
        raise ValueError("windows must have equal length")
    return window_i * np.conj(window_los)


def caf(product: np.ndarray, sample_period_s: float, decimation: int = 8,
        zero_pad_factor: int = 4) -> CafSpectrum:
    """CAF magnitude of a product window on a zero-padded decimated grid.

    Sum-decimation by `decimation` keeps the tone energy coherent while
    shrinking the FFT; any trailing samples that do not fill a group are
    dropped.  The grid spacing is 1/(zero_pad_factor * N_dec * D * Ts).
    """
    if sample_period_s <= 0:
        raise ValueError("sample_period_s must be positive")
    n_dec = len(product) // decimation
    if n_dec < 2:
        raise ValueError("window too short for this decimation")
    z = product[: n_dec * decimation].reshape(n_dec, decimation).sum(axis=1)
    n_fft = n_dec * zero_pad_factor
    spec = np.fft.fftshift(np.fft.fft(z, n=n_fft))
    freqs = np.fft.fftshift(np.fft.fftfreq(n_fft, d=decimation * sample_period_s))
    return CafSpectrum(freqs_hz=freqs, magnitude=np.abs(spec))


def adaptive_threshold(magnitude: np.ndarray, gamma: float, half_train: int) -> np.ndarray:
    """Sliding-average threshold, edge windows truncated to the bins present."""
    if magnitude.ndim != 1 or len(magnitude) == 0:
        raise ValueError("magnitude must be a non-empty 1-d array")
    width = 2 * half_train + 1
    kernel = np.ones(width)
    sums = np.convolve(magnitude, kernel, mode="same")
    counts = np.convolve(np.ones(len(magnitude)), kernel, mode="same")
    return gamma * sums / counts


def detect_peak(spectrum: CafSpectrum, cfg: DetectorConfig) -> DetectionResult:
    """Pick the strongest bin that beats the local threshold, if any."""
    mag = spectrum.magnitude
    beta = adaptive_threshold(mag, cfg.gamma, cfg.half_train)
    passing = np.flatnonzero(mag > beta)
    if len(passing) == 0:
        return DetectionResult(freq_hz=None, valid=False, peak_index=None, threshold=beta)
    j = int(passing[np.argmax(mag[passing])])
    freq = float(spectrum.freqs_hz[j])
    if cfg.parabolic_interp and 0 < j < len(mag) - 1:
        a, b, c = mag[j - 1], mag[j], mag[j + 1]
        denom = a - 2 * b + c
        if denom != 0:
            delta = 0.5 * (a - c) / denom
            freq += float(delta) * spectrum.grid_spacing_hz
    return DetectionResult(freq_hz=freq, valid=True, peak_index=j, threshold=beta)


def observe_aoa(scene: Scene, traj: Trajectory, k: int, detection_interval_s: float,
                cfg: DetectorConfig) -> float:
    """Noisy, optionally quantized LoS bearing observation at instant k."""
    t = k * detection_interval_s
    truth = los_aoa(_point_at(traj, t))
    val = truth
    if cfg.aoa_noise_std_rad > 0:
        rng = np.random.default_rng((cfg.aoa_seed, k))
        val += cfg.aoa_noise_std_rad * rng.standard_normal()
    if cfg.aoa_quant_step_rad > 0:
        val = round(val / cfg.aoa_quant_step_rad) * cfg.aoa_quant_step_rad
    return wrap_angle(val)


def _point_at(traj: Trajectory, t: float):
    from .scene import Point2

    p = traj.position(min(t, traj.duration))
    return Point2(float(p[0]), float(p[1]))


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2 * math.pi)
    if w == -math.pi:
        w = math.pi
    return w


@dataclass
class DetectionSeries:
    """Per-instant Doppler-difference and AoA observations.

    `mddoa_hz[k, i]` holds the detected Doppler difference of reflection path
    i+2 at instant k, NaN when `valid[k, i]` is False.
    """

    detection_interval_s: float
    mddoa_hz: np.ndarray  # (K, 2) float, NaN where invalid
    valid: np.ndarray  # (K, 2) bool
    aoa_rad: np.ndarray  # (K,) float

    def __post_init__(self):
        k = len(self.aoa_rad)
        if self.mddoa_hz.shape != (k, 2) or self.valid.shape != (k, 2):
            raise ValueError("detection series arrays disagree on length")
        if self.detection_interval_s <= 0:
            raise ValueError("detection_interval_s must be positive")

    @property
    def num_instants(self) -> int:
        return len(self.aoa_rad)

    def times_s(self) -> np.ndarray:
        return np.arange(self.num_instants) * self.detection_interval_s


def detect_window(capture_windows, sample_period_s: float, cfg: DetectorConfig):
    """Detect both reflection-path Doppler differences for one instant.

    `capture_windows` is the (3, Nw) array of per-path samples for the
    instant.  Returns ((freq2, valid2), (freq3, valid3), spectra).
    """
    results = []
    spectra = []
    for i in (1, 2):
        prod = conjugate_product(capture_windows[i], capture_windows[0])
        spec = caf(prod, sample_period_s, cfg.decimation, cfg.zero_pad_factor)
        res = detect_peak(spec, cfg)
        results.append((res.freq_hz, res.valid))
        spectra.append(spec)
    return results[0], results[1], spectra


def run_detection(capture: BasebandCapture, scene: Scene, traj: Trajectory,
                  cfg: DetectorConfig) -> DetectionSeries:
    """Run the detector over every instant of a materialized capture."""
    k_count = capture.num_detection_instants
    mddoa = np.full((k_count, 2), np.nan)
    valid = np.zeros((k_count, 2), dtype=bool)
    aoa = np.empty(k_count)
    nw = capture.window_len
    n0 = capture.samples_per_interval
    for k in range(k_count):
        start = k * n0
        windows = np.stack([s[start : start + nw] for s in capture.streams])
        (f2, v2), (f3, v3), _ = detect_window(windows, capture.sample_period_s, cfg)
        if v2:
            mddoa[k, 0] = f2
        if v3:
            mddoa[k, 1] = f3
        valid[k] = (v2, v3)
        aoa[k] = observe_aoa(scene, traj, k, capture.detection_interval_s, cfg)
    return DetectionSeries(
        detection_interval_s=capture.detection_interval_s,
        mddoa_hz=mddoa,
        valid=valid,
        aoa_rad=aoa,
    )


# --- CSV: k,t_s,f_d2_hz,f_d3_hz,valid2,valid3,aoa_rad ---

DETECTIONS_HEADER = ["k", "t_s", "f_d2_hz", "f_d3_hz", "valid2", "valid3", "aoa_rad"]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_detections_csv(series: DetectionSeries, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DETECTIONS_HEADER)
        for k in range(series.num_instants):
            t = k * series.detection_interval_s
            row = [str(k), _fmt(t)]
            for i in range(2):
                row.append(_fmt(series.mddoa_hz[k, i]) if series.valid[k, i] else "")
            row.append("1" if series.valid[k, 0] else "0")
            row.append("1" if series.valid[k, 1] else "0")
            row.append(_fmt(series.aoa_rad[k]))
            writer.writerow(row)
    return path


def read_detections_csv(path) -> DetectionSeries:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != DETECTIONS_HEADER:
            raise ValueError(f"unexpected detections header: {header}")
        rows = list(reader)
    k_count = len(rows)
    if k_count == 0:
        raise ValueError("empty detections file")
    mddoa = np.full((k_count, 2), np.nan)
    valid = np.zeros((k_count, 2), dtype=bool)
    aoa = np.empty(k_count)
    times = np.empty(k_count)
    for row in rows:
        k = int(row[0])
        times[k] = float(row[1])
        for i, cell in enumerate(row[2:4]):
            if cell != "":
                mddoa[k, i] = float(cell)
        valid[k] = (row[4] == "1", row[5] == "1")
        aoa[k] = float(row[6])
    if k_count > 1:
        interval = times[1] - times[0]
    else:
        interval = times[0] if times[0] > 0 else 1.0
    return DetectionSeries(
        detection_interval_s=float(interval),
        mddoa_hz=mddoa,
        valid=valid,
        aoa_rad=aoa,
    )
