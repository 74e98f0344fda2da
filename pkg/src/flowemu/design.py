"""Latin hypercube designs over the initial-condition box."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynsys import DEFAULT_ATOL, DEFAULT_RTOL, simulate
from .errors import DivergenceError, IntegrationError, UsageError

DEGENERATE_PAD = 1e-3


@dataclass(frozen=True)
class BoundingBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise UsageError("box bounds must be vectors of equal length")
        if not np.all(lo < hi):
            raise UsageError(f"box needs lower < upper in every coordinate: {lo} vs {hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    @classmethod
    def unit(cls, d: int) -> "BoundingBox":
        return cls(np.zeros(d), np.ones(d))


def latin_hypercube(n: int, box: BoundingBox, seed: int = 0) -> np.ndarray:
    """Random Latin hypercube: one point per stratum and dimension, jittered within.

    Returns an ``(n, d)`` array scaled to ``box``.
    """
    if n < 1:
        raise UsageError(f"n must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    d = box.dim
    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    unit = (strata + rng.uniform(size=(n, d))) / n
    return box.lower + unit * box.width


def estimate_bounds(system, probe_initial, horizon: float = 100.0, margin: float = 0.05,
                    dt: float = 0.01, tol=(DEFAULT_ATOL, DEFAULT_RTOL)) -> BoundingBox:
    """Box around one long trajectory, inflated by ``margin`` of the width per side.

    Coordinates with zero extent get an absolute pad of ``DEGENERATE_PAD``.
    """
    if not horizon > 0:
        raise UsageError(f"horizon must be positive, got {horizon}")
    steps = max(int(np.ceil(horizon / dt)), 1)
    try:
        traj = simulate(system, probe_initial, dt, steps, tol)
    except IntegrationError as exc:
        raise DivergenceError(f"probe trajectory failed: {exc}") from exc
    finite = np.all(np.isfinite(traj), axis=1)
    if not finite.all():
        seen = traj[: np.argmin(finite)]
        raise DivergenceError("probe trajectory diverged",
                              lower=seen.min(axis=0), upper=seen.max(axis=0))
    lo, hi = traj.min(axis=0), traj.max(axis=0)
    width = hi - lo
    pad = np.where(width > 0, margin * width, DEGENERATE_PAD)
    return BoundingBox(lo - pad, hi + pad)
