"""Three-path complex baseband synthesis.

Produces the uplink sample streams seen by the three receive chains: a
constant-modulus training waveform, per-path amplitude and initial phase, a
carrier-frequency-offset phase process shared by all chains, per-path
cumulative Doppler phase, and independent additive white Gaussian noise.

Streams are generated interval-by-interval (one detection interval per
block) so the detection pipeline can run without materializing long
captures; `synthesize_capture` concatenates the same blocks, which keeps
streamed and materialized samples bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DurationMismatchError
from .scene import Scene, Trajectory

CFO_DRAW_RANGE_HZ = 10_000.0  # offset drawn uniformly in +/- this when unset


@dataclass(frozen=True)
class CfoModel:
    """Carrier-frequency-offset phase process parameters.

    `offset_hz = None` asks the synthesizer to draw the offset once per
    capture, uniformly in +/-10 kHz, from a dedicated seed substream.
    `phase_walk_std` is the per-sample standard deviation of a Wiener phase
    walk added on top of the linear offset ramp (radians per sqrt(sample)).
    """

    offset_hz: float | None = 0.0
    phase_walk_std: float = 0.0

    def __post_init__(self):
        if self.phase_walk_std < 0:
            raise ValueError("phase_walk_std must be >= 0")


@dataclass(frozen=True)
class RadioConfig:
    """Radio-layer parameters for one capture."""

    carrier_hz: float
    sample_period_s: float
    detection_interval_s: float
    window_len: int | None = None  # None -> full detection interval
    path_gains: tuple[float, float, float] = (1.0, 0.5, 0.5)
    initial_phases: tuple[float, float, float] = (0.0, 0.0, 0.0)
    cfo: CfoModel = field(default_factory=CfoModel)
    snr_db: tuple[float, float, float] | None = None  # None -> noiseless
    seed: int = 0

    def __post_init__(self):
        if self.carrier_hz <= 0:
            raise ValueError("carrier_hz must be positive")
        if self.sample_period_s <= 0 or self.detection_interval_s <= 0:
            raise ValueError("sample_period_s and detection_interval_s must be positive")
        ratio = self.detection_interval_s / self.sample_period_s
        n0 = round(ratio)
        if n0 < 1 or abs(ratio - n0) > 1e-6:
            raise ValueError(
                "detection_interval_s must be a positive integer multiple of sample_period_s"
            )
        if self.window_len is not None and not (1 <= self.window_len <= n0):
            raise ValueError(f"window_len must be in [1, {n0}]")
        if len(self.path_gains) != 3 or any(g < 0 for g in self.path_gains):
            raise ValueError("path_gains must be 3 non-negative values")
        if self.path_gains[0] < max(self.path_gains[1], self.path_gains[2]):
            raise ValueError("LoS path gain must be >= each reflection path gain")
        if len(self.initial_phases) != 3:
            raise ValueError("initial_phases must have 3 entries")
        if self.snr_db is not None and len(self.snr_db) != 3:
            raise ValueError("snr_db must be None or 3 values")

    @property
    def samples_per_interval(self) -> int:
        return round(self.detection_interval_s / self.sample_period_s)

    @property
    def effective_window_len(self) -> int:
        return self.samples_per_interval if self.window_len is None else self.window_len


@dataclass
class BasebandCapture:
    """Three synchronized complex sample streams plus capture metadata."""

    streams: tuple[np.ndarray, np.ndarray, np.ndarray]
    sample_period_s: float
    num_detection_instants: int
    samples_per_interval: int
    window_len: int
    carrier_hz: float
    seed: int
    cfo_offset_hz: float | None = None  # resolved value actually applied

    def __post_init__(self):
        lengths = {len(s) for s in self.streams}
        if len(self.streams) != 3 or len(lengths) != 1:
            raise ValueError("capture needs 3 equal-length streams")
        if lengths.pop() < self.num_detection_instants * self.samples_per_interval:
            raise ValueError("streams shorter than the detection instants they claim")

    @property
    def detection_interval_s(self) -> float:
        return self.samples_per_interval * self.sample_period_s

    def window(self, k: int, path: int) -> np.ndarray:
        """Samples of one detection window: [k*N0, k*N0 + Nw)."""
        if not 0 <= k < self.num_detection_instants:
            raise IndexError(f"detection index {k} out of range")
        start = k * self.samples_per_interval
        return self.streams[path - 1][start : start + self.window_len]


def generate_waveform(length: int, seed) -> np.ndarray:
    """Unit-modulus pseudo-random waveform, deterministic per seed."""
    if length < 1:
        raise ValueError("length must be >= 1")
    rng = np.random.default_rng(seed)
    phases = 2.0 * np.pi * rng.random(length)
    return np.cos(phases) + 1j * np.sin(phases)


def cfo_phase_process(model: CfoModel, num_samples: int, sample_period_s: float, seed) -> np.ndarray:
    """CFO phase sequence: linear offset ramp plus a Wiener walk (walk[0] = 0)."""
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    if model.offset_hz is None:
        raise ValueError("offset_hz must be resolved to a number here")
    n = np.arange(num_samples, dtype=float)
    phase = 2.0 * np.pi * model.offset_hz * n * sample_period_s
    if model.phase_walk_std > 0 and num_samples > 1:
        rng = np.random.default_rng(seed)
        steps = rng.standard_normal(num_samples - 1) * model.phase_walk_std
        phase[1:] += np.cumsum(steps)
    return phase


class BlockSynthesizer:
    """Stateful interval-by-interval synthesis.

    Holds the seed substreams (waveform, CFO walk, one noise stream per
    path, CFO offset draw) and the cross-block carries: the CFO walk value,
    the per-path cumulative Doppler phase, and the sample index implied by
    `n_start`.  Consuming blocks in order reproduces `synthesize_capture`
    sample for sample.
    """

    def __init__(self, scene: Scene, traj: Trajectory, cfg: RadioConfig):
        if abs(cfg.carrier_hz / scene.carrier_hz - 1.0) > 1e-9:
            raise ValueError("radio carrier_hz disagrees with scene carrier_hz")
        ss = np.random.SeedSequence(cfg.seed)
        kids = ss.spawn(6)
        self.rng_wave = np.random.default_rng(kids[0])
        self.rng_walk = np.random.default_rng(kids[1])
        self.rng_noise = [np.random.default_rng(kids[2 + i]) for i in range(3)]
        rng_draw = np.random.default_rng(kids[5])
        if cfg.cfo.offset_hz is None:
            self.cfo_offset_hz = float(rng_draw.uniform(-CFO_DRAW_RANGE_HZ, CFO_DRAW_RANGE_HZ))
        else:
            self.cfo_offset_hz = float(cfg.cfo.offset_hz)
        self.scene = scene
        self.traj = traj
        self.cfg = cfg
        self.walk_carry = 0.0
        self.doppler_carry = np.zeros(3)
        self.noise_sigma = None
        if cfg.snr_db is not None:
            # amplitude-domain SNR: h_i^2 * E|s|^2 / E|n_i|^2 with E|s|^2 = 1
            self.noise_sigma = [
                cfg.path_gains[i] * 10.0 ** (-cfg.snr_db[i] / 20.0) for i in range(3)
            ]

    def next_block(self, n_start: int, block_len: int) -> np.ndarray:
        """Synthesize samples n_start .. n_start+block_len-1 for all 3 paths."""
        cfg = self.cfg
        ts = cfg.sample_period_s
        n = n_start + np.arange(block_len)
        # guard the last sample against float rounding past the trajectory end
        t = np.minimum(n * ts, self.traj.duration)

        phases = 2.0 * np.pi * self.rng_wave.random(block_len)
        s = np.cos(phases) + 1j * np.sin(phases)

        cfo_phase = 2.0 * np.pi * self.cfo_offset_hz * (n * ts)
        if cfg.cfo.phase_walk_std > 0:
            draw = block_len - 1 if n_start == 0 else block_len
            steps = self.rng_walk.standard_normal(draw) * cfg.cfo.phase_walk_std
            walk = self.walk_carry + np.cumsum(steps)
            self.walk_carry = walk[-1] if draw else self.walk_carry
            if n_start == 0:
                cfo_phase[1:] += walk
            else:
                cfo_phase += walk

        pos = self.traj.position(t)
        vel = self.traj.velocity(t)
        lam = self.scene.wavelength_m

        out = np.empty((3, block_len), dtype=np.complex128)
        for i in range(3):
            rx = self.scene.receiver_position(i + 1).as_array()
            rel = pos - rx
            dist = np.hypot(rel[:, 0], rel[:, 1])
            radial_speed = (rel[:, 0] * vel[:, 0] + rel[:, 1] * vel[:, 1]) / dist
            f_i = -radial_speed / lam
            incr = (2.0 * np.pi * ts) * f_i
            # cumulative Doppler phase is exclusive: Phi[n] = sum over m < n
            phi = np.empty(block_len)
            phi[0] = self.doppler_carry[i]
            np.cumsum(incr[:-1], out=phi[1:])
            phi[1:] += self.doppler_carry[i]
            self.doppler_carry[i] = phi[-1] + incr[-1]

            theta = cfg.initial_phases[i] + cfo_phase - phi
            out[i] = (cfg.path_gains[i] * s) * (np.cos(theta) - 1j * np.sin(theta))
            if self.noise_sigma is not None and self.noise_sigma[i] > 0:
                nz = self.rng_noise[i].standard_normal((2, block_len))
                scale = self.noise_sigma[i] / np.sqrt(2.0)
                out[i] += scale * (nz[0] + 1j * nz[1])
        return out


def iter_interval_blocks(scene: Scene, traj: Trajectory, cfg: RadioConfig,
                         num_intervals: int, tail_samples: int = 0):
    """Yield (k, block) with block shape (3, N0); a final tail block uses k = -1."""
    state = BlockSynthesizer(scene, traj, cfg)
    n0 = cfg.samples_per_interval
    for k in range(num_intervals):
        yield k, state.next_block(k * n0, n0)
    if tail_samples > 0:
        yield -1, state.next_block(num_intervals * n0, tail_samples)


def synthesize_capture(scene: Scene, traj: Trajectory, cfg: RadioConfig,
                       duration_s: float | None = None) -> BasebandCapture:
    """Generate the full three-stream capture for a trajectory.

    The capture spans `duration_s` (default: the whole trajectory) at the
    configured sample period; the number of detection instants is the count
    of whole detection intervals that fit.
    """
    if duration_s is None:
        duration_s = traj.duration
    if duration_s > traj.duration * (1 + 1e-12):
        raise DurationMismatchError(
            f"capture duration {duration_s} s exceeds trajectory duration {traj.duration} s"
        )
    ts = cfg.sample_period_s
    num_samples = round(duration_s / ts)
    n0 = cfg.samples_per_interval
    num_instants = num_samples // n0
    if num_instants < 1:
        raise DurationMismatchError("capture shorter than one detection interval")

    state = BlockSynthesizer(scene, traj, cfg)
    chunks = [state.next_block(k * n0, n0) for k in range(num_instants)]
    tail = num_samples - num_instants * n0
    if tail > 0:
        chunks.append(state.next_block(num_instants * n0, tail))
    full = np.concatenate(chunks, axis=1)
    return BasebandCapture(
        streams=(full[0], full[1], full[2]),
        sample_period_s=ts,
        num_detection_instants=num_instants,
        samples_per_interval=n0,
        window_len=cfg.effective_window_len,
        carrier_hz=cfg.carrier_hz,
        seed=cfg.seed,
        cfo_offset_hz=state.cfo_offset_hz,
    )


# --- capture files: interleaved float32 I/Q per path + JSON sidecar ---

def write_capture(capture: BasebandCapture, out_dir, basename: str = "capture"):
    """Write per-path interleaved little-endian float32 I/Q plus a JSON sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for i, stream in enumerate(capture.streams, start=1):
        name = f"{basename}_path{i}.iq"
        iq = np.empty(2 * len(stream), dtype="<f4")
        iq[0::2] = stream.real
        iq[1::2] = stream.imag
        iq.tofile(out_dir / name)
        files.append(name)
    sidecar = {
        "format": "interleaved float32 I/Q, little-endian",
        "files": files,
        "sample_period_s": capture.sample_period_s,
        "carrier_hz": capture.carrier_hz,
        "stream_len": len(capture.streams[0]),
        "num_detection_instants": capture.num_detection_instants,
        "samples_per_interval": capture.samples_per_interval,
        "window_len": capture.window_len,
        "seed": capture.seed,
        "cfo_offset_hz": capture.cfo_offset_hz,
    }
    sidecar_path = out_dir / f"{basename}.json"
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return sidecar_path


def read_capture(sidecar_path) -> BasebandCapture:
    """Load a capture written by `write_capture` (float32 I/Q upcast to complex)."""
    sidecar_path = Path(sidecar_path)
    meta = json.loads(sidecar_path.read_text())
    streams = []
    for name in meta["files"]:
        iq = np.fromfile(sidecar_path.parent / name, dtype="<f4")
        if len(iq) != 2 * meta["stream_len"]:
            raise ValueError(f"{name}: expected {2 * meta['stream_len']} floats, got {len(iq)}")
        streams.append(iq[0::2].astype(np.float64) + 1j * iq[1::2].astype(np.float64))
    return BasebandCapture(
        streams=tuple(streams),
        sample_period_s=meta["sample_period_s"],
        num_detection_instants=meta["num_detection_instants"],
        samples_per_interval=meta["samples_per_interval"],
        window_len=meta["window_len"],
        carrier_hz=meta["carrier_hz"],
        seed=meta["seed"],
        cfo_offset_hz=meta.get("cfo_offset_hz"),
    )


def export_capture_csv(capture: BasebandCapture, path):
    """Plain-text export for small captures: n, i1, q1, i2, q2, i3, q3."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("n,i1,q1,i2,q2,i3,q3\n")
        s1, s2, s3 = capture.streams
        for n in range(len(s1)):
            row = [str(n)]
            for s in (s1, s2, s3):
                row.append(repr(float(s[n].real)))
                row.append(repr(float(s[n].imag)))
            fh.write(",".join(row) + "\n")
    return path
