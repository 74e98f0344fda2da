"""Gaussian-process emulation of flow maps with uncertainty propagation."""

__version__ = "0.1.0"

from .analysis import (HorizonReport, coverage_trace, detect_change_point,  # noqa: E402
                       error_trace, horizon, sd_trace)
from .config import ExperimentConfig, load_config, parse_config  # noqa: E402
from .design import BoundingBox, estimate_bounds, latin_hypercube  # noqa: E402
from .dynsys import (DynamicalSystem, integrate_step, lorenz, make_system,  # noqa: E402
                     simulate, vanderpol)
from .emulator import (FlowMapEmulator, TrajectoryPrediction, build, load,  # noqa: E402
                       loo_mse, rollout, save)
from .gp import GPModel, KernelSpec, PriorMean, condition, fit, kernel_eval  # noqa: E402
from .propagate import Mode, PropagationConfig, StateDistribution, step_distribution  # noqa: E402

__all__ = [
    "BoundingBox", "DynamicalSystem", "ExperimentConfig", "FlowMapEmulator", "GPModel",
    "HorizonReport", "KernelSpec", "Mode", "PriorMean", "PropagationConfig",
    "StateDistribution", "TrajectoryPrediction", "build", "condition", "coverage_trace",
    "detect_change_point", "error_trace", "estimate_bounds", "fit", "horizon",
    "integrate_step", "latin_hypercube", "load", "load_config", "loo_mse", "lorenz",
    "kernel_eval", "make_system", "parse_config", "rollout", "save", "sd_trace", "simulate",
    "step_distribution", "vanderpol",
]
