import json
import math

import numpy as np
import pytest

from dopptrack.errors import DurationMismatchError
from dopptrack.scene import Point2, Scene, Trajectory, Wall, true_mddoa
from dopptrack.synth import (
    BasebandCapture,
    BlockSynthesizer,
    CfoModel,
    RadioConfig,
    cfo_phase_process,
    export_capture_csv,
    generate_waveform,
    iter_interval_blocks,
    read_capture,
    synthesize_capture,
    write_capture,
)

CARRIER_HZ = 60.48e9


def small_scene() -> Scene:
    return Scene.from_walls(
        (
            Wall(anchor=Point2(5.0, 0.0), normal=(1.0, 0.0)),
            Wall(anchor=Point2(0.0, 4.0), normal=(0.0, 1.0)),
        ),
        CARRIER_HZ,
    )


def small_cfg(**overrides) -> RadioConfig:
    base = dict(
        carrier_hz=CARRIER_HZ,
        sample_period_s=5e-7,
        detection_interval_s=5e-4,  # 1000 samples per interval: quick tests
        seed=7,
    )
    base.update(overrides)
    return RadioConfig(**base)


def walk_traj(duration=0.05) -> Trajectory:
    return Trajectory([(0.0, (1.0, 1.0)), (duration, (1.0 + 0.4 * duration, 1.0 + 0.2 * duration))])


class TestRadioConfig:
    def test_samples_per_interval(self):
        cfg = small_cfg()
        assert cfg.samples_per_interval == 1000
        assert cfg.effective_window_len == 1000

    def test_window_len_override(self):
        cfg = small_cfg(window_len=256)
        assert cfg.effective_window_len == 256

    def test_interval_must_divide(self):
        with pytest.raises(ValueError):
            small_cfg(detection_interval_s=5.5e-7 * 1.3)

    def test_window_len_bounds(self):
        with pytest.raises(ValueError):
            small_cfg(window_len=0)
        with pytest.raises(ValueError):
            small_cfg(window_len=1001)

    def test_los_gain_dominates(self):
        with pytest.raises(ValueError):
            small_cfg(path_gains=(0.4, 0.5, 0.3))

    def test_negative_walk_std(self):
        with pytest.raises(ValueError):
            CfoModel(offset_hz=0.0, phase_walk_std=-1.0)

    def test_snr_length(self):
        with pytest.raises(ValueError):
            small_cfg(snr_db=(20.0, 20.0))


class TestWaveform:
    def test_unit_modulus(self):
        s = generate_waveform(4096, 1)
        np.testing.assert_allclose(np.abs(s), 1.0, atol=1e-12)

    def test_deterministic(self):
        a = generate_waveform(512, 9)
        b = generate_waveform(512, 9)
        assert np.array_equal(a, b)
        c = generate_waveform(512, 10)
        assert not np.array_equal(a, c)

    def test_los_stream_is_waveform_when_static_and_clean(self):
        # stationary TX, zero CFO, zero initial phase, unit gain: y1 == s exactly
        scene = small_scene()
        traj = Trajectory.stationary(Point2(2.0, 1.0), 0.01)
        cfg = small_cfg(path_gains=(1.0, 0.5, 0.5))
        cap = synthesize_capture(scene, traj, cfg, duration_s=0.002)
        n = len(cap.streams[0])
        expect = generate_waveform(n, np.random.SeedSequence(cfg.seed).spawn(6)[0])
        assert np.array_equal(cap.streams[0], expect)


class TestCfoPhase:
    def test_pure_ramp(self):
        model = CfoModel(offset_hz=100.0, phase_walk_std=0.0)
        phase = cfo_phase_process(model, 5, 1e-3, seed=0)
        np.testing.assert_allclose(phase, 2 * np.pi * 100.0 * 1e-3 * np.arange(5))

    def test_walk_starts_at_zero(self):
        model = CfoModel(offset_hz=0.0, phase_walk_std=0.1)
        phase = cfo_phase_process(model, 100, 1e-3, seed=3)
        assert phase[0] == 0.0
        assert np.std(np.diff(phase)) > 0.0

    def test_walk_increment_scale(self):
        model = CfoModel(offset_hz=0.0, phase_walk_std=0.05)
        phase = cfo_phase_process(model, 200_000, 1e-6, seed=5)
        assert np.std(np.diff(phase)) == pytest.approx(0.05, rel=0.02)

    def test_unresolved_offset_rejected(self):
        with pytest.raises(ValueError):
            cfo_phase_process(CfoModel(offset_hz=None), 10, 1e-3, seed=0)


class TestSynthesis:
    def test_deterministic_per_seed(self):
        scene = small_scene()
        traj = walk_traj()
        cfg = small_cfg(snr_db=(20.0, 20.0, 20.0), cfo=CfoModel(offset_hz=1500.0, phase_walk_std=1e-4))
        a = synthesize_capture(scene, traj, cfg)
        b = synthesize_capture(scene, traj, cfg)
        for i in range(3):
            assert np.array_equal(a.streams[i], b.streams[i])

    def test_streamed_equals_materialized(self):
        scene = small_scene()
        traj = walk_traj()
        cfg = small_cfg(snr_db=(15.0, 15.0, 15.0), cfo=CfoModel(offset_hz=None, phase_walk_std=1e-4))
        cap = synthesize_capture(scene, traj, cfg)
        n0 = cfg.samples_per_interval
        for k, block in iter_interval_blocks(scene, traj, cfg, cap.num_detection_instants):
            for i in range(3):
                assert np.array_equal(block[i], cap.streams[i][k * n0 : (k + 1) * n0])

    def test_capture_length_and_windows(self):
        scene = small_scene()
        traj = walk_traj(duration=0.05)
        cfg = small_cfg()
        cap = synthesize_capture(scene, traj, cfg, duration_s=0.0033)
        # 6600 samples = 6 whole intervals of 1000 plus a 600-sample tail
        assert len(cap.streams[0]) == 6600
        assert cap.num_detection_instants == 6
        w = cap.window(2, path=3)
        assert np.array_equal(w, cap.streams[2][2000:3000])

    def test_duration_beyond_trajectory_rejected(self):
        scene = small_scene()
        traj = walk_traj(duration=0.01)
        with pytest.raises(DurationMismatchError):
            synthesize_capture(scene, traj, small_cfg(), duration_s=0.02)

    def test_capture_shorter_than_interval_rejected(self):
        scene = small_scene()
        traj = walk_traj(duration=0.01)
        with pytest.raises(DurationMismatchError):
            synthesize_capture(scene, traj, small_cfg(), duration_s=1e-4)

    def test_measured_snr_matches_configured(self):
        scene = small_scene()
        traj = walk_traj()
        clean = synthesize_capture(scene, traj, small_cfg())
        noisy = synthesize_capture(scene, traj, small_cfg(snr_db=(20.0, 14.0, 10.0)))
        for i, snr_db in enumerate((20.0, 14.0, 10.0)):
            sig = clean.streams[i]
            noise = noisy.streams[i] - sig
            measured = 10 * np.log10(np.mean(np.abs(sig) ** 2) / np.mean(np.abs(noise) ** 2))
            assert measured == pytest.approx(snr_db, abs=0.2)

    def test_noise_identical_across_cfo_settings(self):
        # noise substreams must not depend on the CFO model at all: the draws
        # are reproducible straight from the per-path seed substream
        scene = small_scene()
        traj = walk_traj()
        snr = (12.0, 12.0, 12.0)
        gains = (1.0, 0.5, 0.5)
        kids = np.random.SeedSequence(7).spawn(6)
        expected = []
        for i in range(3):
            rng = np.random.default_rng(kids[2 + i])
            sigma = gains[i] * 10.0 ** (-snr[i] / 20.0)
            z = np.concatenate(
                [rng.standard_normal((2, 1000)) for _ in range(100)], axis=1
            )
            expected.append(sigma / np.sqrt(2.0) * (z[0] + 1j * z[1]))
        for cfo in (CfoModel(0.0, 0.0), CfoModel(4000.0, 2e-4)):
            clean = synthesize_capture(scene, traj, small_cfg(cfo=cfo))
            noisy = synthesize_capture(scene, traj, small_cfg(cfo=cfo, snr_db=snr))
            for i in range(3):
                got = noisy.streams[i] - clean.streams[i]
                np.testing.assert_allclose(got, expected[i], atol=1e-12)

    def test_cfo_offset_draw_is_seeded(self):
        scene = small_scene()
        traj = walk_traj()
        cfg = small_cfg(cfo=CfoModel(offset_hz=None))
        a = BlockSynthesizer(scene, traj, cfg)
        b = BlockSynthesizer(scene, traj, cfg)
        assert a.cfo_offset_hz == b.cfo_offset_hz
        assert abs(a.cfo_offset_hz) <= 10_000.0
        c = BlockSynthesizer(scene, traj, small_cfg(cfo=CfoModel(offset_hz=None), seed=8))
        assert a.cfo_offset_hz != c.cfo_offset_hz
        cap = synthesize_capture(scene, traj, cfg)
        assert cap.cfo_offset_hz == a.cfo_offset_hz


class TestPhaseStructure:
    def test_doppler_phase_consistency(self):
        # unwrapped sample phase must reproduce the cumulative 2*pi*f*Ts sum
        scene = small_scene()
        traj = Trajectory([(0.0, (1.0, 1.0)), (0.05, (1.02, 1.015))])
        cfg = small_cfg()
        cap = synthesize_capture(scene, traj, cfg)
        n = len(cap.streams[0])
        ts = cfg.sample_period_s
        t = np.minimum(np.arange(n) * ts, traj.duration)
        s = generate_waveform(n, np.random.SeedSequence(cfg.seed).spawn(6)[0])
        from dopptrack.scene import true_doppler

        for i, path in enumerate((1, 2, 3)):
            f = true_doppler(scene, traj, t, path)
            incr = 2 * np.pi * ts * f
            phi_ref = np.concatenate(([0.0], np.cumsum(incr[:-1])))
            z = cap.streams[i] * np.conj(s)
            phase = np.unwrap(np.angle(z))
            # theta = -phi (zero CFO, zero initial phase), so angle(z) = phi
            np.testing.assert_allclose(phase, phi_ref, atol=1e-6)

    def test_conjugate_product_phase_advance_is_mddoa(self):
        scene = small_scene()
        traj = Trajectory([(0.0, (1.0, 1.0)), (0.05, (1.02, 1.015))])
        cfg = small_cfg(cfo=CfoModel(offset_hz=3000.0, phase_walk_std=0.0))
        cap = synthesize_capture(scene, traj, cfg, duration_s=0.002)
        ts = cfg.sample_period_s
        n = len(cap.streams[0])
        t = np.arange(n - 1) * ts
        for path in (2, 3):
            z = cap.streams[path - 1] * np.conj(cap.streams[0])
            advance = np.angle(z[1:] * np.conj(z[:-1])) / (2 * np.pi * ts)
            expect = true_mddoa(scene, traj, t, path)
            np.testing.assert_allclose(advance, expect, atol=1e-6)

    def test_cfo_cancels_in_conjugate_product(self):
        # the created-equal pair: identical seeds, CFO on vs off; the product
        # stream strips the common phase up to last-bit rounding and the
        # detection-level outputs (tested in the detector suite) match exactly
        scene = small_scene()
        traj = walk_traj()
        cap_off = synthesize_capture(scene, traj, small_cfg())
        cap_on = synthesize_capture(
            scene, traj, small_cfg(cfo=CfoModel(offset_hz=8000.0, phase_walk_std=5e-4))
        )
        for path in (2, 3):
            p_off = cap_off.streams[path - 1] * np.conj(cap_off.streams[0])
            p_on = cap_on.streams[path - 1] * np.conj(cap_on.streams[0])
            np.testing.assert_allclose(p_on, p_off, atol=2e-13)

    def test_initial_phase_offsets_appear(self):
        scene = small_scene()
        traj = Trajectory.stationary(Point2(2.0, 1.0), 0.001)
        cfg = small_cfg(initial_phases=(0.2, 1.1, -0.7))
        cap = synthesize_capture(scene, traj, cfg, duration_s=0.001)
        s = generate_waveform(2000, np.random.SeedSequence(cfg.seed).spawn(6)[0])
        for i, phi0 in enumerate((0.2, 1.1, -0.7)):
            z = cap.streams[i] * np.conj(s)
            np.testing.assert_allclose(np.angle(z), -phi0, atol=1e-12)


class TestCaptureIO:
    def test_roundtrip(self, tmp_path):
        scene = small_scene()
        traj = walk_traj()
        cfg = small_cfg(snr_db=(18.0, 18.0, 18.0), cfo=CfoModel(offset_hz=None))
        cap = synthesize_capture(scene, traj, cfg, duration_s=0.002)
        sidecar = write_capture(cap, tmp_path, basename="cap")
        assert sidecar.name == "cap.json"
        meta = json.loads(sidecar.read_text())
        assert meta["stream_len"] == 4000
        back = read_capture(sidecar)
        assert back.sample_period_s == cap.sample_period_s
        assert back.num_detection_instants == cap.num_detection_instants
        assert back.cfo_offset_hz == cap.cfo_offset_hz
        for i in range(3):
            # float32 on disk: about 7 significant digits survive
            np.testing.assert_allclose(back.streams[i], cap.streams[i], atol=5e-7)

    def test_truncated_file_rejected(self, tmp_path):
        scene = small_scene()
        traj = walk_traj()
        cap = synthesize_capture(scene, traj, small_cfg(), duration_s=0.001)
        sidecar = write_capture(cap, tmp_path)
        raw = (tmp_path / "capture_path2.iq").read_bytes()
        (tmp_path / "capture_path2.iq").write_bytes(raw[:-8])
        with pytest.raises(ValueError):
            read_capture(sidecar)

    def test_csv_export(self, tmp_path):
        scene = small_scene()
        traj = walk_traj()
        cap = synthesize_capture(scene, traj, small_cfg(), duration_s=0.0005)
        out = export_capture_csv(cap, tmp_path / "cap.csv")
        lines = out.read_text().splitlines()
        assert lines[0] == "n,i1,q1,i2,q2,i3,q3"
        assert len(lines) == 1 + 1000
        first = lines[1].split(",")
        assert first[0] == "0"
        assert float(first[1]) == pytest.approx(cap.streams[0][0].real)

    def test_capture_validation(self):
        with pytest.raises(ValueError):
            BasebandCapture(
                streams=(np.zeros(8, complex), np.zeros(8, complex), np.zeros(7, complex)),
                sample_period_s=1e-6,
                num_detection_instants=1,
                samples_per_interval=8,
                window_len=8,
                carrier_hz=CARRIER_HZ,
                seed=0,
            )
