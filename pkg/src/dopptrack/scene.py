"""Scene geometry and ground-truth kinematics.

A single base station sits at the origin with two reflecting walls nearby.
Each wall contributes one specular reflection path, which behaves like a
line-of-sight path from the mirror image of the base station ("virtual BS").
This module owns that geometry plus the kinematic quantities derived from a
ground-truth trajectory: per-path Doppler, Doppler differences between the
reflection paths and the LoS path, and the LoS angle of arrival.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, InvalidWallError

SPEED_OF_LIGHT = 299792458.0  # m/s, exact

_UNIT_TOL = 1e-12


@dataclass(frozen=True)
class Point2:
    """Planar point in meters."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"coordinates must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def distance_to(self, other: "Point2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Wall:
    """Infinite reflecting line given by a point on it and its unit normal."""

    anchor: Point2
    normal: tuple[float, float]

    def __post_init__(self):
        nx, ny = self.normal
        if abs(math.hypot(nx, ny) - 1.0) > _UNIT_TOL:
            raise InvalidWallError(
                f"wall normal must be unit length within {_UNIT_TOL}, got {self.normal}"
            )


def mirror_bs(bs: Point2, wall: Wall) -> Point2:
    """Mirror a base-station position across a wall line.

    Returns bs - 2*((bs - anchor) . n) * n.  Applying the same reflection to
    the result recovers the original point.
    """
    nx, ny = wall.normal
    if abs(math.hypot(nx, ny) - 1.0) > _UNIT_TOL:
        raise InvalidWallError(f"wall normal must be unit length, got {wall.normal}")
    dx = bs.x - wall.anchor.x
    dy = bs.y - wall.anchor.y
    proj = dx * nx + dy * ny
    return Point2(bs.x - 2.0 * proj * nx, bs.y - 2.0 * proj * ny)


@dataclass(frozen=True)
class Scene:
    """Base station at the origin, two walls, and the derived virtual BSs."""

    bs: Point2
    walls: tuple[Wall, Wall]
    virtual_bs: tuple[Point2, Point2]
    carrier_hz: float
    wavelength_m: float

    def __post_init__(self):
        if (self.bs.x, self.bs.y) != (0.0, 0.0):
            raise ValueError("base station must sit at the origin")
        if len(self.walls) != 2 or len(self.virtual_bs) != 2:
            raise ValueError("exactly two walls / virtual BSs required")
        for wall, vbs in zip(self.walls, self.virtual_bs):
            expect = mirror_bs(self.bs, wall)
            if expect.distance_to(vbs) > 1e-9:
                raise ValueError(
                    f"virtual BS {vbs} inconsistent with wall mirror {expect}"
                )
            if vbs.distance_to(self.bs) == 0.0:
                raise ValueError("wall passes through the BS; reflection degenerate")
        if self.carrier_hz <= 0:
            raise ValueError("carrier frequency must be positive")
        if abs(self.wavelength_m * self.carrier_hz / SPEED_OF_LIGHT - 1.0) > 1e-12:
            raise ValueError("wavelength inconsistent with carrier frequency")

    @classmethod
    def from_walls(cls, walls, carrier_hz: float) -> "Scene":
        """Canonical construction: BS at origin, virtual BSs derived."""
        walls = tuple(walls)
        bs = Point2(0.0, 0.0)
        virtual = tuple(mirror_bs(bs, w) for w in walls)
        return cls(
            bs=bs,
            walls=walls,
            virtual_bs=virtual,
            carrier_hz=float(carrier_hz),
            wavelength_m=SPEED_OF_LIGHT / float(carrier_hz),
        )

    def receiver_position(self, path: int) -> Point2:
        """Effective receiver for a path: the BS (path 1) or a virtual BS (2, 3)."""
        if path == 1:
            return self.bs
        if path in (2, 3):
            return self.virtual_bs[path - 2]
        raise ValueError(f"path must be 1, 2 or 3, got {path}")

    def same_side_as_bs(self, x: float, y: float) -> bool:
        """True when (x, y) lies on the BS side of both walls.

        Wall reflections only reach transmitters in front of the reflecting
        surfaces, so positions behind either wall are unphysical.
        """
        for wall in self.walls:
            nx, ny = wall.normal
            side = (x - wall.anchor.x) * nx + (y - wall.anchor.y) * ny
            bs_side = (self.bs.x - wall.anchor.x) * nx + (self.bs.y - wall.anchor.y) * ny
            if side * bs_side < 0.0:
                return False
        return True


class Trajectory:
    """Continuous ground-truth path, sampleable at any time in [0, T].

    Built from (time, position) waypoints with either piecewise-linear or
    cubic-spline interpolation.  Piecewise-linear velocity at a waypoint knot
    follows the right-hand segment; at t = T it follows the last segment.
    """

    def __init__(self, waypoints, interpolation: str = "linear"):
        if len(waypoints) < 2:
            raise ValueError("trajectory needs at least two waypoints")
        ts = np.array([float(t) for t, _ in waypoints], dtype=float)
        if ts[0] != 0.0:
            raise ValueError("first waypoint must be at t = 0")
        if np.any(np.diff(ts) <= 0):
            raise ValueError("waypoint timestamps must be strictly increasing")
        pts = np.array(
            [[p.x, p.y] if isinstance(p, Point2) else [p[0], p[1]] for _, p in waypoints],
            dtype=float,
        )
        if not np.all(np.isfinite(pts)):
            raise ValueError("waypoint coordinates must be finite")
        if interpolation not in ("linear", "cubic"):
            raise ValueError(f"unknown interpolation {interpolation!r}")
        self._ts = ts
        self._pts = pts
        self.interpolation = interpolation
        self.duration = float(ts[-1])
        if interpolation == "cubic":
            from scipy.interpolate import CubicSpline

            self._spline = CubicSpline(ts, pts, axis=0, bc_type="natural")
            self._dspline = self._spline.derivative()
        else:
            dt = np.diff(ts)
            self._slopes = np.diff(pts, axis=0) / dt[:, None]

    @property
    def waypoints(self):
        return [(t, Point2(x, y)) for t, (x, y) in zip(self._ts, self._pts)]

    def _check_domain(self, t: np.ndarray):
        if np.any(t < 0.0) or np.any(t > self.duration):
            raise ValueError(
                f"time outside trajectory domain [0, {self.duration}]"
            )

    def _segment_index(self, t: np.ndarray) -> np.ndarray:
        # right-sided convention: t exactly at a knot belongs to the next segment
        idx = np.searchsorted(self._ts, t, side="right") - 1
        return np.clip(idx, 0, len(self._ts) - 2)

    def position(self, t):
        """Position at time t (scalar or array); shape (2,) or (n, 2)."""
        t_arr = np.asarray(t, dtype=float)
        self._check_domain(t_arr)
        if self.interpolation == "cubic":
            out = self._spline(t_arr)
        else:
            x = np.interp(t_arr, self._ts, self._pts[:, 0])
            y = np.interp(t_arr, self._ts, self._pts[:, 1])
            out = np.stack([x, y], axis=-1)
        return out

    def velocity(self, t):
        """Velocity at time t (scalar or array); shape (2,) or (n, 2)."""
        t_arr = np.asarray(t, dtype=float)
        self._check_domain(t_arr)
        if self.interpolation == "cubic":
            return self._dspline(t_arr)
        idx = self._segment_index(t_arr)
        return self._slopes[idx]

    @classmethod
    def stationary(cls, p: Point2, duration: float) -> "Trajectory":
        return cls([(0.0, p), (float(duration), p)])


def distance_difference(scene: Scene, p: Point2, path: int) -> float:
    """Range to the virtual BS of a reflection path minus range to the BS."""
    if path not in (2, 3):
        raise ValueError(f"distance difference is defined for paths 2 and 3, got {path}")
    vbs = scene.receiver_position(path)
    r_v = vbs.distance_to(p)
    r_b = scene.bs.distance_to(p)
    if r_v == 0.0 or r_b == 0.0:
        raise DegenerateGeometryError(
            f"point {p} coincides with a receiver position"
        )
    return r_v - r_b


def los_aoa(p: Point2) -> float:
    """Bearing of p from the BS at the origin, in (-pi, pi]."""
    if p.x == 0.0 and p.y == 0.0:
        raise DegenerateGeometryError("AoA undefined at the origin")
    angle = math.atan2(p.y, p.x)
    # atan2 returns -pi for points on the negative x-axis approached from below
    if angle == -math.pi:
        angle = math.pi
    return angle


def _doppler_many(scene: Scene, traj: Trajectory, t: np.ndarray, path: int) -> np.ndarray:
    """Vectorized per-path Doppler: -(1/lambda) d/dt ||rx - p(t)||."""
    rx = scene.receiver_position(path).as_array()
    pos = np.atleast_2d(traj.position(t))
    vel = np.atleast_2d(traj.velocity(t))
    rel = pos - rx
    rng = np.hypot(rel[:, 0], rel[:, 1])
    if np.any(rng == 0.0):
        raise DegenerateGeometryError("transmitter coincides with a receiver position")
    radial_speed = (rel[:, 0] * vel[:, 0] + rel[:, 1] * vel[:, 1]) / rng
    return -radial_speed / scene.wavelength_m


def true_doppler(scene: Scene, traj: Trajectory, t, path: int):
    """Ground-truth Doppler frequency of a path at time t, in Hz.

    At a piecewise-linear waypoint knot the right-hand segment velocity is
    used (and the left-hand one at t = T).
    """
    if path not in (1, 2, 3):
        raise ValueError(f"path must be 1, 2 or 3, got {path}")
    out = _doppler_many(scene, traj, t, path)
    return float(out[0]) if np.isscalar(t) or np.ndim(t) == 0 else out


def true_mddoa(scene: Scene, traj: Trajectory, t, path: int):
    """Ground-truth Doppler difference of a reflection path vs the LoS path."""
    if path not in (2, 3):
        raise ValueError(f"Doppler difference is defined for paths 2 and 3, got {path}")
    out = _doppler_many(scene, traj, t, path) - _doppler_many(scene, traj, t, 1)
    return float(out[0]) if np.isscalar(t) or np.ndim(t) == 0 else out
