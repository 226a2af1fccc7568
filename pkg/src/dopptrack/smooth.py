"""Local polynomial smoothing of detection series.

Each output sample is the value at the window center of a least-squares
polynomial fitted to the valid samples inside a sliding window.  Windows are
truncated (not shifted) at the series ends, and windows that contain too few
valid samples grow symmetrically until a fit is possible, which also fills
gaps left by invalid detections.  Angles are unwrapped before fitting so the
+/-pi seam does not tear the fit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .detect import DetectionSeries, wrap_angle
from .errors import InsufficientDataError


@dataclass(frozen=True)
class SmootherConfig:
    window: int = 11  # odd number of detection instants per fit
    order: int = 2
    fill_gaps: bool = True

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("window must be an odd integer >= 3")
        if not 0 <= self.order < self.window:
            raise ValueError("order must satisfy 0 <= order < window")


def _fit_center(values: np.ndarray, valid: np.ndarray, k: int, cfg: SmootherConfig) -> float:
    n = len(values)
    half = cfg.window // 2
    need = cfg.order + 1
    while True:
        lo = max(0, k - half)
        hi = min(n - 1, k + half)
        idx = np.arange(lo, hi + 1)
        sel = idx[valid[idx]]
        if len(sel) >= need:
            break
        if lo == 0 and hi == n - 1:
            raise InsufficientDataError(
                f"only {len(sel)} valid samples, polynomial order {cfg.order} needs {need}"
            )
        half += 1
    x = (sel - k).astype(float)
    vand = np.polynomial.polynomial.polyvander(x, cfg.order)
    coef, *_ = np.linalg.lstsq(vand, values[sel], rcond=None)
    return float(coef[0])


def polynomial_smooth(values, valid=None, cfg: SmootherConfig = SmootherConfig()):
    """Smooth a 1-d series; returns (smoothed, output_valid).

    Invalid samples never enter a fit.  With `fill_gaps` they are replaced by
    the local fit value and marked valid on output; otherwise they stay NaN
    and keep their flag.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) == 0:
        raise ValueError("values must be a non-empty 1-d array")
    if valid is None:
        valid = np.isfinite(values)
    else:
        valid = np.asarray(valid, dtype=bool) & np.isfinite(values)
    if valid.shape != values.shape:
        raise ValueError("valid mask must match values")

    out = np.full_like(values, np.nan)
    out_valid = valid.copy()
    for k in range(len(values)):
        if not valid[k] and not cfg.fill_gaps:
            continue
        out[k] = _fit_center(values, valid, k, cfg)
        out_valid[k] = True
    return out, out_valid


def smooth_series(series: DetectionSeries, cfg: SmootherConfig = SmootherConfig()) -> DetectionSeries:
    """Smooth both Doppler-difference columns and the AoA column."""
    mddoa = np.full_like(series.mddoa_hz, np.nan)
    valid = np.zeros_like(series.valid)
    for i in range(2):
        mddoa[:, i], valid[:, i] = polynomial_smooth(
            series.mddoa_hz[:, i], series.valid[:, i], cfg
        )
    unwrapped = np.unwrap(series.aoa_rad)
    aoa_s, _ = polynomial_smooth(unwrapped, None, cfg)
    aoa = np.array([wrap_angle(a) for a in aoa_s])
    return replace(series, mddoa_hz=mddoa, valid=valid, aoa_rad=aoa)
