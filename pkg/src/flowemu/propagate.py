"""One-step propagation of a Gaussian state through the coordinate emulators.

Moments of the emulator output under a Gaussian input are estimated by
Monte Carlo on a single sample matrix shared by every coordinate and every
cross term, then matched to a Gaussian.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import PropagationError, UsageError

PSD_RTOL = 1e-8


class Mode(str, enum.Enum):
    PLUGIN = "plugin"
    UNCORRELATED = "uncorrelated"
    CORRELATED = "correlated"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {"uncorrelatedmc": cls.UNCORRELATED, "correlatedmc": cls.CORRELATED,
                   "plugin": cls.PLUGIN}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise UsageError(f"unknown propagation mode {value!r}") from None


def repair_covariance(cov) -> np.ndarray:
    """Symmetrize; clip negative eigenvalues to zero only when any are present."""
    cov = np.array(cov, dtype=float, ndmin=2)
    cov = 0.5 * (cov + cov.T)
    if not np.all(np.isfinite(cov)):
        raise PropagationError("covariance contains non-finite entries")
    if not np.any(cov):
        return cov
    w, V = np.linalg.eigh(cov)
    if w.min() >= 0.0:
        return cov
    cov = (V * np.clip(w, 0.0, None)) @ V.T
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class StateDistribution:
    """Gaussian approximation ``N(mean, cov)`` of the state at one time index."""

    mean: np.ndarray
    cov: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        cov = repair_covariance(self.cov)
        if cov.shape != (mean.size, mean.size):
            raise UsageError(f"cov shape {cov.shape} does not match mean of size {mean.size}")
        if self.time_index < 0:
            raise UsageError("time_index must be non-negative")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "time_index", int(self.time_index))

    @classmethod
    def point(cls, x, time_index: int = 0) -> "StateDistribution":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(x, np.zeros((x.size, x.size)), time_index)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def is_deterministic(self) -> bool:
        return not np.any(self.cov)

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def sample(self, rng: np.random.Generator, n: int, antithetic: bool = False) -> np.ndarray:
        return draw_samples(self, standard_normals(rng, n, self.dim, antithetic))


def standard_normals(rng: np.random.Generator, n: int, d: int,
                     antithetic: bool = False) -> np.ndarray:
    """``(n, d)`` standard normals; antithetic draws come in ``(z, -z)`` pairs."""
    if not antithetic:
        return rng.standard_normal((n, d))
    half = rng.standard_normal((n - n // 2, d))
    return np.concatenate([half, -half[: n // 2]])


def draw_samples(state: StateDistribution, normals: np.ndarray) -> np.ndarray:
    """Map standard normals to ``N(state.mean, state.cov)`` via the eigen-factor."""
    w, V = np.linalg.eigh(state.cov)
    if w.min(initial=0.0) < -PSD_RTOL * max(np.trace(state.cov), 0.0):
        raise PropagationError("cannot sample from a non-PSD covariance")
    root = V * np.sqrt(np.clip(w, 0.0, None))
    return state.mean + normals @ root.T


@dataclass(frozen=True)
class PropagationConfig:
    mode: Mode = Mode.CORRELATED
    n_mc: int = 1000
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        if self.mode is not Mode.PLUGIN and self.n_mc < 2:
            raise UsageError("n_mc must be at least 2 for Monte Carlo modes")


def _shifted_mean(a: np.ndarray) -> float:
    # shifting by the first sample keeps the mean of identical values exact
    return float(a[0] + np.mean(a - a[0]))


def _centered_mean_product(a: np.ndarray, b: np.ndarray) -> float:
    # unbiased (n-1) sample covariance: the 1/n version shrinks the state
    # covariance by (1 - 1/n_mc) at every step, which compounds over a rollout
    da, db = a - a[0], b - b[0]
    return float(np.sum((da - np.mean(da)) * (db - np.mean(db))) / (a.size - 1))


def propagate_moments_scalar(model, input: StateDistribution, samples) -> tuple[float, float]:
    """Mean and variance of ``f(x*)`` for ``x* ~ input``, by Monte Carlo.

    Variance is the average predictive variance plus the spread of the
    predictive mean over ``samples``.
    """
    m, s2 = model.predict_many(samples)
    return _shifted_mean(m), _shifted_mean(s2) + _centered_mean_product(m, m)


def cross_covariance(model_a, model_b, samples) -> float:
    """Covariance of two independent emulators induced by a shared random input."""
    ma = model_a.predict_many(samples, return_var=False)
    mb = ma if model_b is model_a else model_b.predict_many(samples, return_var=False)
    return _centered_mean_product(ma, mb)


def plugin_step(models, input: StateDistribution) -> StateDistribution:
    x = input.mean[None, :]
    means, variances = zip(*(m.predict_many(x) for m in models))
    mean = np.array([v[0] for v in means])
    var = np.array([v[0] for v in variances])
    return StateDistribution(mean, np.diag(var), input.time_index + 1)


def mc_moments(models, samples: np.ndarray, correlated: bool):
    """Mean vector and covariance of the emulated flow map over ``samples``."""
    d = len(models)
    M = np.empty((samples.shape[0], d))
    avg_var = np.empty(d)
    for l, model in enumerate(models):
        M[:, l], s2 = model.predict_many(samples)
        avg_var[l] = _shifted_mean(s2)
    mean = np.array([_shifted_mean(M[:, l]) for l in range(d)])
    cov = np.zeros((d, d))
    for l in range(d):
        cov[l, l] = avg_var[l] + _centered_mean_product(M[:, l], M[:, l])
        if correlated:
            for j in range(l):
                cov[l, j] = cov[j, l] = _centered_mean_product(M[:, l], M[:, j])
    return mean, cov


def step_distribution(emulator, input: StateDistribution, config: PropagationConfig,
                      rng: np.random.Generator | None = None,
                      samples: np.ndarray | None = None) -> StateDistribution:
    """Advance ``input`` by one emulated time step.

    ``emulator`` is anything with a ``models`` sequence (or the sequence
    itself). Monte Carlo modes draw ``config.n_mc`` samples from ``rng``
    (seeded from ``config.seed`` if omitted) unless ``samples`` is given.
    """
    models = getattr(emulator, "models", emulator)
    if len(models) != input.dim:
        raise UsageError(f"{len(models)} emulators for a {input.dim}-dimensional state")
    if config.mode is Mode.PLUGIN or (input.is_deterministic and samples is None):
        return plugin_step(models, input)
    if samples is None:
        if rng is None:
            rng = np.random.default_rng(config.seed)
        samples = input.sample(rng, config.n_mc, config.antithetic)
    mean, cov = mc_moments(models, samples, config.mode is Mode.CORRELATED)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise PropagationError(f"non-finite moments at step {input.time_index + 1}")
    return StateDistribution(mean, cov, input.time_index + 1)
