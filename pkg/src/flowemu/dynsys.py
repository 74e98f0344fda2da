"""Ground-truth simulators: right-hand sides and an adaptive Dormand-Prince integrator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import IntegrationError, UsageError

DEFAULT_ATOL = 1e-10
DEFAULT_RTOL = 1e-8

# Dormand-Prince 5(4) tableau, FSAL.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass(frozen=True)
class DynamicalSystem:
    """Autonomous ODE ``dx/dt = rhs(x)``."""

    name: str
    dimension: int
    rhs: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.rhs(x)


@dataclass(frozen=True)
class FlowMapSample:
    x0: np.ndarray
    x1: np.ndarray
    dt: float


def lorenz_rhs(state, a: float, b: float, c: float) -> np.ndarray:
    x1, x2, x3 = state
    return np.array([a * x1 + x2 * x3, b * (x2 - x3), -x1 * x2 + c * x2 - x3])


def vanderpol_rhs(state, alpha: float) -> np.ndarray:
    x1, x2 = state
    return np.array([x2, alpha * (1.0 - x1 * x1) * x2 - x1])


def lorenz(a: float = -8.0 / 3.0, b: float = -10.0, c: float = 28.0) -> DynamicalSystem:
    a, b, c = float(a), float(b), float(c)
    return DynamicalSystem("lorenz", 3, lambda x: lorenz_rhs(x, a, b, c),
                           {"a": a, "b": b, "c": c})


def vanderpol(alpha: float = 5.0) -> DynamicalSystem:
    alpha = float(alpha)
    return DynamicalSystem("vanderpol", 2, lambda x: vanderpol_rhs(x, alpha),
                           {"alpha": alpha})


def constant(dimension: int = 1) -> DynamicalSystem:
    """``dx/dt = 0``; every state is an equilibrium."""
    dimension = int(dimension)
    return DynamicalSystem("constant", dimension, lambda x: np.zeros(dimension),
                           {"dimension": dimension})


def linear_growth(rate: float = 1.0, dimension: int = 1) -> DynamicalSystem:
    """``dx/dt = rate * x``."""
    rate, dimension = float(rate), int(dimension)
    return DynamicalSystem("linear_growth", dimension, lambda x: rate * np.asarray(x, float),
                           {"rate": rate, "dimension": dimension})


SYSTEMS: dict[str, Callable[..., DynamicalSystem]] = {
    "lorenz": lorenz,
    "vanderpol": vanderpol,
    "constant": constant,
    "linear_growth": linear_growth,
}


def register_system(name: str, factory: Callable[..., DynamicalSystem]) -> None:
    SYSTEMS[name] = factory


def make_system(name: str, params: dict | None = None) -> DynamicalSystem:
    try:
        factory = SYSTEMS[name]
    except KeyError:
        raise UsageError(f"unknown system {name!r}; known: {sorted(SYSTEMS)}") from None
    try:
        return factory(**(params or {}))
    except TypeError as exc:
        raise UsageError(f"bad parameters for system {name!r}: {exc}") from None


def _advance(f, x0: np.ndarray, duration: float, h: float, atol: float, rtol: float):
    """Integrate ``duration`` forward from ``x0``; returns ``(x, suggested_h)``.

    The final step is shortened to land on ``duration`` exactly.
    """
    x = np.array(x0, dtype=float)
    t = 0.0
    k1 = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(k1)):
        raise IntegrationError("non-finite derivative at initial state")
    if not np.any(k1):
        return x, h
    h = min(h, duration)
    last_h = h
    while t < duration:
        h_try = min(h, duration - t)
        if h_try <= 1e-14 * max(1.0, duration):
            if duration - t <= 1e-14 * max(1.0, duration):
                break
            raise IntegrationError(f"step size underflow at t={t:.3g}")
        k = [k1]
        for i in range(1, 7):
            xi = x + h_try * sum(a * kj for a, kj in zip(_A[i], k) if a != 0.0)
            k.append(np.asarray(f(xi), dtype=float))
        x_new = xi  # stage 7 is evaluated at the 5th-order solution (FSAL)
        err = h_try * sum(e * kj for e, kj in zip(_E, k) if e != 0.0)
        scale = atol + rtol * np.maximum(np.abs(x), np.abs(x_new))
        err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if not (np.all(np.isfinite(x_new)) and np.isfinite(err_norm)):
            h = 0.2 * h_try
            if h < 1e-14 * max(1.0, duration):
                raise IntegrationError(f"non-finite state at t={t:.3g}")
            continue
        if err_norm <= 1.0:
            t = duration if h_try == duration - t else t + h_try
            x = x_new
            k1 = k[6]
            last_h = h_try
            factor = 5.0 if err_norm == 0.0 else min(5.0, 0.9 * err_norm ** -0.2)
            h = h_try * factor
        else:
            h = h_try * max(0.2, 0.9 * err_norm ** -0.2)
    return x, max(h, last_h)


def integrate_step(system, x0, dt: float, tol=(DEFAULT_ATOL, DEFAULT_RTOL)) -> np.ndarray:
    """State at ``t0 + dt`` starting from ``x0`` at ``t0``.

    ``system`` may be a :class:`DynamicalSystem` or any callable ``rhs(x)``.
    ``tol`` is ``(atol, rtol)`` for the embedded error estimate.
    """
    if not dt > 0:
        raise UsageError(f"dt must be positive, got {dt}")
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise IntegrationError("initial state is not finite")
    atol, rtol = tol
    x, _ = _advance(system, x0, float(dt), float(dt), atol, rtol)
    return x


def simulate(system, x0, dt: float, steps: int,
             tol=(DEFAULT_ATOL, DEFAULT_RTOL)) -> np.ndarray:
    """Reference trajectory at ``t = 0, dt, ..., steps*dt``, shape ``(steps+1, d)``.

    Chains one-step integrations so the truth is sampled on exactly the
    grid the emulator predicts on.
    """
    if not dt > 0:
        raise UsageError(f"dt must be positive, got {dt}")
    atol, rtol = tol
    x = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise IntegrationError("initial state is not finite")
    out = np.empty((steps + 1, x.size))
    out[0] = x
    h = float(dt)
    for i in range(1, steps + 1):
        try:
            x, h = _advance(system, x, float(dt), h, atol, rtol)
        except IntegrationError as exc:
            raise IntegrationError(f"step {i} (t={i * dt:.6g}): {exc}") from exc
        out[i] = x
    return out


def generate_training(system, design, dt: float,
                      tol=(DEFAULT_ATOL, DEFAULT_RTOL)) -> list[FlowMapSample]:
    """Run the simulator for one step from every design row."""
    design = np.array(design, dtype=float, ndmin=2)
    samples = []
    for i, row in enumerate(design):
        try:
            x1 = integrate_step(system, row, dt, tol)
        except IntegrationError as exc:
            raise IntegrationError(f"design row {i}: {exc}") from exc
        samples.append(FlowMapSample(row.copy(), x1, float(dt)))
    return samples


def samples_to_arrays(samples: list[FlowMapSample]) -> tuple[np.ndarray, np.ndarray]:
    return np.array([s.x0 for s in samples]), np.array([s.x1 for s in samples])
