"""Initial-position recovery and trajectory tracking.

Both problems minimize a weighted sum of squared residuals built from the
accumulated Doppler-difference observations and the LoS bearing, using a
damped Newton iteration on the Gauss-Newton normal equations.

The initial solve estimates the first two transmitter positions jointly: the
Doppler-difference average over the first interval ties the range change
between them to the observations, and the two bearings fix the directions.
Afterwards each detection instant is solved on its own, anchored by the
frozen range differences of the initial position and warm-started from the
previous estimate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detect import DetectionSeries, wrap_angle
from .errors import DegenerateGeometryError, InsufficientDataError, NonConvergenceError
from .scene import Point2, Scene, Trajectory, distance_difference, los_aoa

START_LADDER = (1.0, 0.5, 2.0, 4.0, 8.0)  # range multipliers for restarts


@dataclass(frozen=True)
class SolverConfig:
    """Weighted-least-squares solver settings shared by both problems."""

    weights_init: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    weights_track: tuple[float, float, float] = (1.0, 1.0, 1.0)
    grad_tol: float = 1e-9
    max_iters: int = 100
    damping0: float = 1e-3
    init_range_m: float = 2.0
    multistart: int = 5
    doppler_scale_hz: float = 20.0
    aoa_scale_rad: float = math.radians(1.0)

    def __post_init__(self):
        if len(self.weights_init) != 4 or len(self.weights_track) != 3:
            raise ValueError("weights_init needs 4 entries, weights_track 3")
        if any(w < 0 for w in self.weights_init + self.weights_track):
            raise ValueError("weights must be non-negative")
        if not any(self.weights_init) or not any(self.weights_track):
            raise ValueError("at least one weight per objective must be positive")
        if self.grad_tol <= 0 or self.max_iters < 1 or self.damping0 <= 0:
            raise ValueError("grad_tol, max_iters and damping0 must be positive")
        if self.init_range_m <= 0:
            raise ValueError("init_range_m must be positive")
        if not 1 <= self.multistart <= len(START_LADDER):
            raise ValueError(f"multistart must be in [1, {len(START_LADDER)}]")
        if self.doppler_scale_hz <= 0 or self.aoa_scale_rad <= 0:
            raise ValueError("residual scales must be positive")


@dataclass(frozen=True)
class InitialMeasurements:
    """Smoothed observations entering the initial solve.

    `mddoa0_hz[i]` is the first-interval Doppler-difference average of
    reflection path i+2; the bearings belong to instants 0 and 1.
    """

    mddoa0_hz: tuple[float, float]
    aoa0_rad: float
    aoa1_rad: float
    detection_interval_s: float

    @classmethod
    def from_series(cls, series: DetectionSeries) -> "InitialMeasurements":
        if series.num_instants < 2:
            raise InsufficientDataError("initial solve needs at least two instants")
        if not series.valid[0].all():
            raise InsufficientDataError("first-instant Doppler differences are invalid")
        return cls(
            mddoa0_hz=(float(series.mddoa_hz[0, 0]), float(series.mddoa_hz[0, 1])),
            aoa0_rad=float(series.aoa_rad[0]),
            aoa1_rad=float(series.aoa_rad[1]),
            detection_interval_s=series.detection_interval_s,
        )


def _grad_distance_difference(scene: Scene, p: np.ndarray, path: int) -> np.ndarray:
    vbs = scene.receiver_position(path).as_array()
    bs = scene.bs.as_array()
    rv = p - vbs
    rb = p - bs
    nv = np.hypot(rv[0], rv[1])
    nb = np.hypot(rb[0], rb[1])
    if nv == 0.0 or nb == 0.0:
        raise DegenerateGeometryError("gradient undefined at a receiver position")
    return rv / nv - rb / nb


def _grad_aoa(p: np.ndarray) -> np.ndarray:
    r2 = p[0] ** 2 + p[1] ** 2
    if r2 == 0.0:
        raise DegenerateGeometryError("bearing gradient undefined at the origin")
    return np.array([-p[1], p[0]]) / r2


def _dd(scene: Scene, p: np.ndarray, path: int) -> float:
    return distance_difference(scene, Point2(float(p[0]), float(p[1])), path)


def _aoa(p: np.ndarray) -> float:
    return los_aoa(Point2(float(p[0]), float(p[1])))


def init_residuals(scene: Scene, x: np.ndarray, meas: InitialMeasurements) -> np.ndarray:
    """Raw residuals [doppler2, doppler3, bearing0, bearing1] at x = (p0, p1)."""
    p0, p1 = x[:2], x[2:]
    lam_td = scene.wavelength_m * meas.detection_interval_s
    e = np.empty(4)
    for i, path in enumerate((2, 3)):
        e[i] = (_dd(scene, p0, path) - _dd(scene, p1, path)) / lam_td - meas.mddoa0_hz[i]
    e[2] = wrap_angle(_aoa(p0) - meas.aoa0_rad)
    e[3] = wrap_angle(_aoa(p1) - meas.aoa1_rad)
    return e


def init_jacobian(scene: Scene, x: np.ndarray, meas: InitialMeasurements) -> np.ndarray:
    """Raw 4x4 Jacobian of `init_residuals` in x = (p0x, p0y, p1x, p1y)."""
    p0, p1 = x[:2], x[2:]
    lam_td = scene.wavelength_m * meas.detection_interval_s
    jac = np.zeros((4, 4))
    for i, path in enumerate((2, 3)):
        jac[i, :2] = _grad_distance_difference(scene, p0, path) / lam_td
        jac[i, 2:] = -_grad_distance_difference(scene, p1, path) / lam_td
    jac[2, :2] = _grad_aoa(p0)
    jac[3, 2:] = _grad_aoa(p1)
    return jac


def track_residuals(scene: Scene, p: np.ndarray, accum_hz: np.ndarray, aoa_rad: float,
                    d0_m: np.ndarray, detection_interval_s: float) -> np.ndarray:
    """Raw residuals [doppler2, doppler3, bearing] for one instant.

    `accum_hz[i]` is the summed Doppler-difference history of path i+2 up to
    (excluding) this instant; `d0_m[i]` is the frozen range difference at the
    estimated initial position.
    """
    lam_td = scene.wavelength_m * detection_interval_s
    e = np.empty(3)
    for i, path in enumerate((2, 3)):
        e[i] = (d0_m[i] - _dd(scene, p, path)) / lam_td - accum_hz[i]
    e[2] = wrap_angle(_aoa(p) - aoa_rad)
    return e


def track_jacobian(scene: Scene, p: np.ndarray, detection_interval_s: float) -> np.ndarray:
    lam_td = scene.wavelength_m * detection_interval_s
    jac = np.empty((3, 2))
    for i, path in enumerate((2, 3)):
        jac[i] = -_grad_distance_difference(scene, p, path) / lam_td
    jac[2] = _grad_aoa(p)
    return jac


@dataclass
class SolveResult:
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list)


def _solve_damped_newton(residual_fn, jacobian_fn, x0: np.ndarray, weights: np.ndarray,
                         scales: np.ndarray, cfg: SolverConfig) -> SolveResult:
    """Damped Newton on the scaled weighted least-squares objective.

    Residuals and Jacobian rows are divided by `scales` before weighting, so
    heterogeneous units (Hz vs rad) contribute comparably.  The damping term
    shrinks by 0.3 on accepted steps and grows by 3 on rejected ones.
    """

    def evaluate(x):
        e = residual_fn(x) / scales
        return e, float(np.dot(weights * e, e))

    x = np.asarray(x0, dtype=float).copy()
    e, obj = evaluate(x)
    mu = cfg.damping0
    trace = [obj]
    iterations = 0
    converged = False
    for _ in range(cfg.max_iters):
        jac = jacobian_fn(x) / scales[:, None]
        grad = 2.0 * jac.T @ (weights * e)
        if np.linalg.norm(grad) < cfg.grad_tol:
            converged = True
            break
        hess = 2.0 * (jac.T * weights) @ jac
        accepted = False
        stagnated = False
        while mu < 1e12:
            step = np.linalg.solve(hess + mu * np.eye(len(x)), -grad)
            # a step this small cannot move x in float64: we are at the
            # numerical minimum even if the gradient floor sits above grad_tol
            if np.linalg.norm(step) <= 1e-12 * (1.0 + np.linalg.norm(x)):
                stagnated = True
                break
            try:
                e_new, obj_new = evaluate(x + step)
            except DegenerateGeometryError:
                mu *= 3.0
                continue
            if obj_new < obj:
                x = x + step
                e, obj = e_new, obj_new
                mu = max(mu * 0.3, 1e-12)
                accepted = True
                trace.append(obj)
                break
            mu *= 3.0
        iterations += 1
        if stagnated:
            converged = True
            break
        if not accepted:
            break
    else:
        # ran out of iterations; report the gradient state we stopped in
        jac = jacobian_fn(x) / scales[:, None]
        grad = 2.0 * jac.T @ (weights * e)
        converged = bool(np.linalg.norm(grad) < cfg.grad_tol)
    return SolveResult(x=x, objective=obj, iterations=iterations,
                       converged=converged, objective_trace=trace)


@dataclass
class InitialEstimate:
    p0: Point2
    p1: Point2
    objective: float
    iterations: int
    converged: bool
    start_multiplier: float


def solve_initial(scene: Scene, meas: InitialMeasurements, cfg: SolverConfig) -> InitialEstimate:
    """Joint estimate of the first two positions from a ladder of restarts.

    Every start places both positions on their observed bearing rays at a
    range taken from the ladder around `init_range_m`.  Among converged
    results those with both positions in front of the walls outrank the
    rest (the system can have exact roots behind a wall, where no
    reflection can originate); objective breaks ties, then ladder order.
    """
    scales = np.array([cfg.doppler_scale_hz, cfg.doppler_scale_hz,
                       cfg.aoa_scale_rad, cfg.aoa_scale_rad])
    weights = np.asarray(cfg.weights_init, dtype=float)
    u0 = np.array([math.cos(meas.aoa0_rad), math.sin(meas.aoa0_rad)])
    u1 = np.array([math.cos(meas.aoa1_rad), math.sin(meas.aoa1_rad)])

    best = None
    best_mult = None
    best_rank = None
    fallback = None
    for mult in START_LADDER[: cfg.multistart]:
        r = mult * cfg.init_range_m
        x0 = np.concatenate([r * u0, r * u1])
        try:
            res = _solve_damped_newton(
                lambda x: init_residuals(scene, x, meas),
                lambda x: init_jacobian(scene, x, meas),
                x0, weights, scales, cfg,
            )
        except DegenerateGeometryError:
            continue
        if fallback is None or res.objective < fallback.objective:
            fallback = res
        admissible = scene.same_side_as_bs(res.x[0], res.x[1]) \
            and scene.same_side_as_bs(res.x[2], res.x[3])
        rank = (not admissible, res.objective)
        if res.converged and (best is None or rank < best_rank):
            best = res
            best_rank = rank
            best_mult = mult
    if best is None:
        raise NonConvergenceError(
            "initial solve did not converge from any start",
            best_x=None if fallback is None else fallback.x,
            best_objective=None if fallback is None else fallback.objective,
        )
    return InitialEstimate(
        p0=Point2(float(best.x[0]), float(best.x[1])),
        p1=Point2(float(best.x[2]), float(best.x[3])),
        objective=best.objective,
        iterations=best.iterations,
        converged=True,
        start_multiplier=best_mult,
    )


def accumulate_mddoa(series: DetectionSeries) -> np.ndarray:
    """Exclusive running sum of the Doppler-difference series, shape (K, 2).

    Row k holds the sum over instants m < k, so row 0 is zero.  The series
    must be gap-free (smoothed) before accumulation.
    """
    if not series.valid.all() or not np.all(np.isfinite(series.mddoa_hz)):
        raise InsufficientDataError("accumulation needs a gap-free detection series")
    out = np.zeros_like(series.mddoa_hz)
    np.cumsum(series.mddoa_hz[:-1], axis=0, out=out[1:])
    return out


@dataclass
class TrackEstimate:
    """Estimated trajectory with per-instant solver diagnostics."""

    detection_interval_s: float
    positions_m: np.ndarray  # (K, 2)
    iterations: np.ndarray  # (K,)
    converged: np.ndarray  # (K,) bool
    initial: InitialEstimate
    true_positions_m: np.ndarray | None = None  # (K, 2) when truth is known

    @property
    def num_instants(self) -> int:
        return len(self.positions_m)

    def times_s(self) -> np.ndarray:
        return np.arange(self.num_instants) * self.detection_interval_s

    def errors_m(self) -> np.ndarray:
        if self.true_positions_m is None:
            return np.full(self.num_instants, np.nan)
        diff = self.positions_m - self.true_positions_m
        return np.hypot(diff[:, 0], diff[:, 1])


def track_trajectory(scene: Scene, series: DetectionSeries, cfg: SolverConfig,
                     traj: Trajectory | None = None) -> TrackEstimate:
    """Recover the transmitter path from a smoothed detection series.

    Instant 0 comes from the joint initial solve; every later instant is a
    2-unknown solve against the accumulated Doppler differences and its own
    bearing, warm-started from the previous position.  Ground truth, when
    given, only fills the reporting columns.
    """
    init = solve_initial(scene, InitialMeasurements.from_series(series), cfg)
    accum = accumulate_mddoa(series)
    d0 = np.array([_dd(scene, init.p0.as_array(), path) for path in (2, 3)])
    scales = np.array([cfg.doppler_scale_hz, cfg.doppler_scale_hz, cfg.aoa_scale_rad])
    weights = np.asarray(cfg.weights_track, dtype=float)

    k_count = series.num_instants
    positions = np.empty((k_count, 2))
    iterations = np.zeros(k_count, dtype=int)
    converged = np.zeros(k_count, dtype=bool)
    positions[0] = init.p0.as_array()
    iterations[0] = init.iterations
    converged[0] = init.converged

    prev = init.p1.as_array()
    t_d = series.detection_interval_s
    for k in range(1, k_count):
        res = _solve_damped_newton(
            lambda p, k=k: track_residuals(scene, p, accum[k], series.aoa_rad[k], d0, t_d),
            lambda p: track_jacobian(scene, p, t_d),
            prev, weights, scales, cfg,
        )
        positions[k] = res.x
        iterations[k] = res.iterations
        converged[k] = res.converged
        prev = res.x

    truth = None
    if traj is not None:
        times = np.minimum(np.arange(k_count) * t_d, traj.duration)
        truth = traj.position(times)
    return TrackEstimate(
        detection_interval_s=t_d,
        positions_m=positions,
        iterations=iterations,
        converged=converged,
        initial=init,
        true_positions_m=truth,
    )


# --- CSV: k,t_s,x_hat_m,y_hat_m,x_true_m,y_true_m,err_m,iterations,converged ---

TRACK_HEADER = ["k", "t_s", "x_hat_m", "y_hat_m", "x_true_m", "y_true_m",
                "err_m", "iterations", "converged"]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_track_csv(estimate: TrackEstimate, path) -> Path:
    path = Path(path)
    errs = estimate.errors_m()
    truth = estimate.true_positions_m
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACK_HEADER)
        for k in range(estimate.num_instants):
            row = [str(k), _fmt(k * estimate.detection_interval_s),
                   _fmt(estimate.positions_m[k, 0]), _fmt(estimate.positions_m[k, 1])]
            if truth is None:
                row += ["", "", ""]
            else:
                row += [_fmt(truth[k, 0]), _fmt(truth[k, 1]), _fmt(errs[k])]
            row += [str(int(estimate.iterations[k])),
                    "1" if estimate.converged[k] else "0"]
            writer.writerow(row)
    return path


def read_track_csv(path) -> dict:
    """Read a track file back into plain arrays (no solver state)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRACK_HEADER:
            raise ValueError(f"unexpected track header: {header}")
        rows = list(reader)
    k_count = len(rows)
    out = {
        "t_s": np.empty(k_count),
        "positions_m": np.empty((k_count, 2)),
        "true_positions_m": np.full((k_count, 2), np.nan),
        "err_m": np.full(k_count, np.nan),
        "iterations": np.zeros(k_count, dtype=int),
        "converged": np.zeros(k_count, dtype=bool),
    }
    for row in rows:
        k = int(row[0])
        out["t_s"][k] = float(row[1])
        out["positions_m"][k] = (float(row[2]), float(row[3]))
        if row[4] != "":
            out["true_positions_m"][k] = (float(row[4]), float(row[5]))
            out["err_m"][k] = float(row[6])
        out["iterations"][k] = int(row[7])
        out["converged"][k] = row[8] == "1"
    return out
