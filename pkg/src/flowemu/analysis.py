"""Diagnostics on completed rollouts: errors, coverage, change points, horizon."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError


@dataclass(frozen=True)
class HorizonReport:
    change_points: np.ndarray  # per coordinate, index into the full trajectory
    changed: np.ndarray  # False where the no-change sentinel was returned
    horizon_index: int
    horizon: float
    sd_traces: np.ndarray  # (T+1, d)

    def as_dict(self) -> dict:
        return {
            "change_points": [int(c) for c in self.change_points],
            "changed": [bool(c) for c in self.changed],
            "horizon_index": int(self.horizon_index),
            "horizon": float(self.horizon),
        }


def _sds(traj) -> np.ndarray:
    return np.asarray(traj.sds if hasattr(traj, "sds") else traj, dtype=float)


def _means(traj) -> np.ndarray:
    return np.asarray(traj.means if hasattr(traj, "means") else traj, dtype=float)


def sd_trace(traj, coordinate: int) -> np.ndarray:
    """Predictive standard deviation of one coordinate at every step."""
    return _sds(traj)[:, coordinate]


def detect_change_point(series) -> int:
    """Single change in mean (at most one change), least-squares cost.

    Returns the index of the first element of the second segment, or
    ``len(series)`` when the series is constant.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 4:
        raise UsageError(f"need at least 4 points for change-point detection, got {n}")
    if not np.all(np.isfinite(x)):
        raise UsageError("series must be finite")
    centred = x - x.mean()
    total = float(centred @ centred)
    if total <= (1e-14 * max(1.0, float(np.max(np.abs(x))))) ** 2 * n:
        return n
    # SSE(left) + SSE(right) = total - k(n-k)/n * (mean_left - mean_right)^2
    csum = np.cumsum(centred)[:-1]
    k = np.arange(1, n)
    gain = csum * csum * n / (k * (n - k))
    return int(np.argmax(gain)) + 1


def horizon(traj, dt: float | None = None) -> HorizonReport:
    """Change point of each log-SD trace; the horizon is the earliest one.

    Step 0 (exact initial condition, zero SD) is excluded from the traces
    fed to the detector.
    """
    sds = _sds(traj)
    dt = getattr(traj, "dt", None) if dt is None else dt
    if dt is None:
        raise UsageError("dt is required when passing raw arrays")
    T = sds.shape[0] - 1
    cps = np.empty(sds.shape[1], dtype=int)
    changed = np.empty(sds.shape[1], dtype=bool)
    for l in range(sds.shape[1]):
        logsd = np.log(np.maximum(sds[1:, l], np.finfo(float).tiny))
        cp = detect_change_point(logsd)
        changed[l] = cp < logsd.size
        cps[l] = cp + 1 if changed[l] else T
    idx = int(cps.min())
    return HorizonReport(cps, changed, idx, idx * dt, sds)


def _check_truth(means: np.ndarray, truth) -> np.ndarray:
    truth = np.asarray(truth, dtype=float)
    if truth.shape != means.shape:
        raise UsageError(f"truth shape {truth.shape} does not match prediction {means.shape}")
    return truth


def error_trace(traj, truth) -> np.ndarray:
    """``|mean - truth|`` per step and coordinate, shape ``(T+1, d)``."""
    means = _means(traj)
    return np.abs(means - _check_truth(means, truth))


def inside_band(traj, truth, width: float = 2.0) -> np.ndarray:
    """Boolean ``(T+1, d)``: truth within ``mean +/- width*sd``."""
    means, sds = _means(traj), _sds(traj)
    return np.abs(means - _check_truth(means, truth)) <= width * sds


def coverage_trace(traj, truth, split_index: int | None = None, width: float = 2.0) -> dict:
    """Fraction of (step, coordinate) pairs whose truth lies in the ``+/-2 SD`` band.

    With ``split_index`` the fraction is also reported for steps before it
    and from it onwards.
    """
    inside = inside_band(traj, truth, width)
    out = {"overall": float(inside.mean()),
           "per_coordinate": inside.mean(axis=0).tolist()}
    if split_index is not None:
        pre, post = inside[:split_index], inside[split_index:]
        out["pre"] = float(pre.mean()) if pre.size else float("nan")
        out["post"] = float(post.mean()) if post.size else float("nan")
    return out
