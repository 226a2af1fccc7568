"""Multipath-Doppler trajectory tracking toolkit.

Simulates three-path mmWave uplink captures (LoS plus two wall reflections),
detects per-interval Doppler differences and LoS bearing, smooths the series,
and recovers the transmitter trajectory by weighted least squares.
"""

from .detect import (
    CafSpectrum,
    DetectionSeries,
    DetectorConfig,
    adaptive_threshold,
    caf,
    conjugate_product,
    detect_peak,
    detect_window,
    observe_aoa,
    read_detections_csv,
    run_detection,
    wrap_angle,
    write_detections_csv,
)
from .errors import (
    ConfigError,
    DegenerateGeometryError,
    DopptrackError,
    DurationMismatchError,
    InsufficientDataError,
    InvalidWallError,
    NonConvergenceError,
    NumericalError,
    PipelineError,
)
from .pipeline import (
    OutputOptions,
    PipelineResult,
    Scenario,
    bundled_scenario_path,
    error_cdf,
    load_scenario,
    run_pipeline,
    run_sweep,
    scenario_from_dict,
    scenario_to_dict,
)
from .scene import (
    SPEED_OF_LIGHT,
    Point2,
    Scene,
    Trajectory,
    Wall,
    distance_difference,
    los_aoa,
    mirror_bs,
    true_doppler,
    true_mddoa,
)
from .smooth import SmootherConfig, polynomial_smooth, smooth_series
from .synth import (
    BasebandCapture,
    BlockSynthesizer,
    CfoModel,
    RadioConfig,
    cfo_phase_process,
    generate_waveform,
    iter_interval_blocks,
    read_capture,
    synthesize_capture,
    write_capture,
)
from .track import (
    InitialEstimate,
    InitialMeasurements,
    SolverConfig,
    TrackEstimate,
    accumulate_mddoa,
    read_track_csv,
    solve_initial,
    track_trajectory,
    write_track_csv,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
