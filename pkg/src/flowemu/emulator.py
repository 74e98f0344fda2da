"""Flow-map emulation: one GP per state coordinate, iterated over time."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .design import BoundingBox, latin_hypercube
from .dynsys import DEFAULT_ATOL, DEFAULT_RTOL, generate_training, samples_to_arrays
from .errors import FlowEmuError, InsufficientDataError, NumericalError, UsageError
from .gp import GPModel, KernelSpec, PriorMean, condition, fit, trend_basis
from .propagate import PropagationConfig, StateDistribution, step_distribution

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FlowMapEmulator:
    models: tuple[GPModel, ...]
    dt: float
    box: BoundingBox
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        if not self.models:
            raise UsageError("emulator needs at least one coordinate model")
        X0 = self.models[0].design
        for m in self.models[1:]:
            if m.design.shape != X0.shape or not np.array_equal(m.design, X0):
                raise UsageError("coordinate models must share one design")
        if X0.shape[1] != len(self.models):
            raise UsageError("number of models must equal the state dimension")

    @property
    def dim(self) -> int:
        return len(self.models)

    @property
    def design(self) -> np.ndarray:
        return self.models[0].design

    @property
    def outputs(self) -> np.ndarray:
        return np.column_stack([m.outputs for m in self.models])

    def predict_mean(self, X) -> np.ndarray:
        return np.column_stack([m.predict_many(X, return_var=False) for m in self.models])


def fit_emulator(design, outputs, dt: float, box: BoundingBox, family="se",
                 seed: int = 0, restarts: int = 5, meta: dict | None = None) -> FlowMapEmulator:
    """Fit one GP per output column on a shared design."""
    design = np.asarray(design, dtype=float)
    outputs = np.asarray(outputs, dtype=float)
    models = []
    for l in range(outputs.shape[1]):
        try:
            models.append(fit(design, outputs[:, l], family, seed=seed + l, restarts=restarts))
        except FlowEmuError as exc:
            raise type(exc)(f"coordinate {l + 1}: {exc}") from exc
        logger.info("coordinate %d: sigma2=%.4g theta=%s", l + 1,
                    models[-1].kernel.variance, models[-1].kernel.lengthscales)
    return FlowMapEmulator(tuple(models), float(dt), box, dict(meta or {}))


def build(system, box: BoundingBox, n: int, dt: float, family="se", seed: int = 0,
          fit_seed: int | None = None, restarts: int = 5,
          tol=(DEFAULT_ATOL, DEFAULT_RTOL)) -> FlowMapEmulator:
    """Latin hypercube design, one simulator step per design point, d GP fits."""
    if not dt > 0:
        raise UsageError(f"dt must be positive, got {dt}")
    if n < 12 * box.dim:
        logger.warning("n=%d is below the recommended 12*d=%d", n, 12 * box.dim)
    design = latin_hypercube(n, box, seed)
    X0, X1 = samples_to_arrays(generate_training(system, design, dt, tol))
    return fit_emulator(X0, X1, dt, box, family, seed if fit_seed is None else fit_seed,
                        restarts, meta={"system": getattr(system, "name", "custom")})


@dataclass(frozen=True)
class TrajectoryPrediction:
    states: tuple[StateDistribution, ...]
    gen_var: np.ndarray
    config: PropagationConfig
    dt: float
    error: str | None = None

    @property
    def steps(self) -> int:
        return len(self.states) - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.dt

    @property
    def means(self) -> np.ndarray:
        return np.array([s.mean for s in self.states])

    @property
    def sds(self) -> np.ndarray:
        return np.array([s.sd for s in self.states])

    @property
    def covs(self) -> np.ndarray:
        return np.array([s.cov for s in self.states])


def rollout(emulator: FlowMapEmulator, x0, steps: int,
            config: PropagationConfig | None = None) -> TrajectoryPrediction:
    """Iterate the emulated flow map ``steps`` times from the exact state ``x0``.

    A numerical failure at step k stops the rollout; the states up to k-1
    are returned with ``error`` set.
    """
    config = config or PropagationConfig()
    if steps < 1:
        raise UsageError("steps must be at least 1")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (emulator.dim,) or not np.all(np.isfinite(x0)):
        raise UsageError(f"x0 must be a finite vector of length {emulator.dim}")
    rng = np.random.default_rng(config.seed)
    states = [StateDistribution.point(x0)]
    error = None
    for k in range(1, steps + 1):
        try:
            states.append(step_distribution(emulator, states[-1], config, rng))
        except NumericalError as exc:
            error = f"step {k}: {exc}"
            logger.error("rollout stopped at %s", error)
            break
    gen_var = np.array([max(np.linalg.det(s.cov), 0.0) for s in states])
    return TrajectoryPrediction(tuple(states), gen_var, config, emulator.dt, error)


def loo_residuals(model: GPModel) -> np.ndarray:
    """Leave-one-out residuals ``y_i - yhat_{-i}`` with the trend re-estimated per fold.

    Uses the inverse of the bordered kriging matrix ``[[K, F], [F^T, 0]]``;
    covariance hyperparameters and jitter stay at their full-data values.
    """
    X, y = model.design, model.outputs
    n = len(y)
    F = trend_basis(X)
    p = F.shape[1]
    if n < p + 2:
        raise InsufficientDataError(f"LOO needs at least d+3={p + 2} samples, got {n}")
    K = model.kernel(X, X) + model.jitter * np.eye(n)
    A = np.block([[K, F], [F.T, np.zeros((p, p))]])
    Q = np.linalg.inv(A)
    rhs = np.concatenate([y, np.zeros(p)])
    return (Q[:n] @ rhs) / np.diag(Q)[:n]


def loo_mse(emulator_or_model, coordinate: int | None = None) -> float:
    """Leave-one-out mean squared error of one coordinate emulator (0-based)."""
    if isinstance(emulator_or_model, FlowMapEmulator):
        if coordinate is None:
            raise UsageError("coordinate is required for an emulator")
        model = emulator_or_model.models[coordinate]
    else:
        model = emulator_or_model
    r = loo_residuals(model)
    return float(np.mean(r * r))


def save(emulator: FlowMapEmulator, path, provenance: dict | None = None) -> Path:
    """Write an ``.npz`` archive with arrays plus a JSON metadata record."""
    path = Path(path)
    meta = {
        "format": "flowemu-emulator",
        "version": __version__,
        "dt": emulator.dt,
        "dim": emulator.dim,
        "n": int(emulator.design.shape[0]),
        "models": [
            {"family": m.kernel.family.value, "variance": m.kernel.variance,
             "lengthscales": m.kernel.lengthscales.tolist(), "jitter": m.jitter,
             "intercept": m.mean.intercept, "slopes": m.mean.slopes.tolist()}
            for m in emulator.models
        ],
        "meta": emulator.meta,
        "provenance": provenance or {},
    }
    with open(path, "wb") as fh:
        np.savez(fh, design=emulator.design, outputs=emulator.outputs,
                 box_lower=emulator.box.lower, box_upper=emulator.box.upper,
                 metadata=np.array(json.dumps(meta, sort_keys=True)))
    return path


def load(path) -> FlowMapEmulator:
    """Rebuild an emulator from :func:`save` output without refitting."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["metadata"]))
        if meta.get("format") != "flowemu-emulator":
            raise UsageError(f"{path} is not a flowemu emulator archive")
        design = data["design"]
        outputs = data["outputs"]
        box = BoundingBox(data["box_lower"], data["box_upper"])
    models = []
    for l, rec in enumerate(meta["models"]):
        kernel = KernelSpec(rec["family"], rec["variance"], rec["lengthscales"])
        mean = PriorMean(rec["intercept"], rec["slopes"])
        models.append(condition(design, outputs[:, l], kernel, mean, jitter=rec["jitter"]))
    em_meta = dict(meta.get("meta", {}))
    em_meta["provenance"] = meta.get("provenance", {})
    return FlowMapEmulator(tuple(models), meta["dt"], box, em_meta)
