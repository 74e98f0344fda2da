"""Scalar-output Gaussian-process regression.

Kernels are stationary products over coordinates, the prior mean is a
first-order polynomial, and hyperparameters are estimated by maximum
likelihood with the trend coefficients and the process variance profiled
out in closed form.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .errors import FitError, IllConditionedError, InsufficientDataError, UsageError

logger = logging.getLogger(__name__)

JITTER_START = 1e-10
JITTER_MAX = 1e-6
VARIANCE_FLOOR = 1e-12
LOG_BOUND_FACTORS = (1e-2, 1e2)


class KernelFamily(str, enum.Enum):
    SE = "se"
    MATERN32 = "matern32"
    EXPONENTIAL = "exponential"

    @classmethod
    def parse(cls, value: "KernelFamily | str") -> "KernelFamily":
        if isinstance(value, cls):
            return value
        aliases = {
            "squaredexponential": cls.SE,
            "squared_exponential": cls.SE,
            "gauss": cls.SE,
            "gaussian": cls.SE,
            "matern3_2": cls.MATERN32,
            "matern_3_2": cls.MATERN32,
            "exp": cls.EXPONENTIAL,
        }
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise UsageError(f"unknown kernel family {value!r}") from None


def _correlation(family: KernelFamily, scaled_diff: np.ndarray) -> np.ndarray:
    """Correlation from |x - x'| / theta, reduced over the last axis."""
    r = np.abs(scaled_diff)
    if family is KernelFamily.SE:
        return np.exp(-0.5 * np.sum(r * r, axis=-1))
    if family is KernelFamily.MATERN32:
        s = np.sqrt(3.0) * r
        return np.prod(1.0 + s, axis=-1) * np.exp(-np.sum(s, axis=-1))
    return np.exp(-np.sum(r, axis=-1))


@dataclass(frozen=True)
class KernelSpec:
    """Stationary product kernel ``variance * prod_l c(|x_l - x'_l| / theta_l)``."""

    family: KernelFamily
    variance: float
    lengthscales: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily.parse(self.family))
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float)).copy()
        if ls.ndim != 1:
            raise UsageError("lengthscales must be a vector")
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise UsageError(f"kernel variance must be positive, got {self.variance}")
        if not np.all(np.isfinite(ls) & (ls > 0)):
            raise UsageError("lengthscales must be positive and finite")
        ls.flags.writeable = False
        object.__setattr__(self, "variance", float(self.variance))
        object.__setattr__(self, "lengthscales", ls)

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def correlation(self, X1, X2) -> np.ndarray:
        X1 = _as_points(X1, self.dim)
        X2 = _as_points(X2, self.dim)
        diff = (X1[:, None, :] - X2[None, :, :]) / self.lengthscales
        return _correlation(self.family, diff)

    def __call__(self, X1, X2) -> np.ndarray:
        return self.variance * self.correlation(X1, X2)


def _as_points(X, dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise UsageError(f"expected points of dimension {dim}, got shape {X.shape}")
    return X


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    """Covariance between two single points."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.shape != (spec.dim,) or x2.shape != (spec.dim,):
        raise UsageError(
            f"points must have shape ({spec.dim},), got {x.shape} and {x2.shape}"
        )
    return float(spec.variance * _correlation(spec.family, (x - x2) / spec.lengthscales))


@dataclass(frozen=True)
class PriorMean:
    """First-order polynomial trend ``intercept + slopes . x``."""

    intercept: float
    slopes: np.ndarray

    def __post_init__(self):
        slopes = np.atleast_1d(np.asarray(self.slopes, dtype=float)).copy()
        slopes.flags.writeable = False
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "slopes", slopes)

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate([[self.intercept], self.slopes])

    def __call__(self, X) -> np.ndarray:
        X = _as_points(X, self.slopes.size)
        return self.intercept + X @ self.slopes


def trend_basis(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _factorize(C: np.ndarray, scale: float, start: float = JITTER_START):
    """Cholesky of ``C + jitter*I`` with jitter escalating x10 from ``start*scale``.

    Returns ``(L, jitter)``.
    """
    n = C.shape[0]
    rel = start
    while rel <= JITTER_MAX * (1 + 1e-9):
        jitter = rel * scale
        try:
            L = np.linalg.cholesky(C + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            rel *= 10.0
            continue
        if np.all(np.isfinite(L)):
            return L, jitter
        rel *= 10.0
    raise IllConditionedError(
        f"covariance not positive definite with jitter up to {JITTER_MAX:g} x scale"
    )


@dataclass(frozen=True)
class GPModel:
    """A fitted scalar emulator, immutable once built."""

    design: np.ndarray
    outputs: np.ndarray
    kernel: KernelSpec
    mean: PriorMean
    cov_factor: np.ndarray
    alpha: np.ndarray
    jitter: float

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def dim(self) -> int:
        return self.design.shape[1]

    def predict_many(self, X, return_var: bool = True):
        """Posterior mean (and variance) at the rows of ``X``."""
        X = _as_points(X, self.dim)
        if not np.all(np.isfinite(X)):
            raise UsageError("prediction input must be finite")
        Kx = self.kernel(X, self.design)
        m = self.mean(X) + Kx @ self.alpha
        if not return_var:
            return m
        V = solve_triangular(self.cov_factor, Kx.T, lower=True, check_finite=False)
        s2 = self.kernel.variance - np.einsum("ij,ij->j", V, V)
        return m, np.clip(s2, 0.0, self.kernel.variance)

    def predict(self, x) -> tuple[float, float]:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise UsageError(f"expected a point of shape ({self.dim},), got {x.shape}")
        m, s2 = self.predict_many(x[None, :])
        return float(m[0]), float(s2[0])


def condition(design, outputs, kernel: KernelSpec, mean: PriorMean,
              jitter: float | None = None) -> GPModel:
    """Condition a GP with fixed hyperparameters on ``(design, outputs)``.

    With ``jitter=None`` the diagonal inflation escalates from
    ``JITTER_START * variance`` until the Cholesky factorization succeeds; an
    explicit ``jitter`` is used as is.
    """
    X = np.array(design, dtype=float, ndmin=2)
    y = np.array(outputs, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise UsageError("design and outputs disagree on the number of samples")
    if X.shape[1] != kernel.dim or mean.slopes.size != kernel.dim:
        raise UsageError("design dimension does not match kernel / prior mean")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise UsageError("training data must be finite")
    K = kernel(X, X)
    if jitter is None:
        L, jitter = _factorize(K, kernel.variance)
    else:
        try:
            L = np.linalg.cholesky(K + jitter * np.eye(len(y)))
        except np.linalg.LinAlgError:
            raise IllConditionedError("covariance not positive definite") from None
    alpha = cho_solve((L, True), y - mean(X), check_finite=False)
    for arr in (X, y, L, alpha):
        arr.flags.writeable = False
    return GPModel(X, y, kernel, mean, L, alpha, jitter)


def log_marginal_likelihood(design, outputs, kernel: KernelSpec, mean: PriorMean,
                            jitter: float | None = None) -> float:
    """Gaussian log-density of ``outputs`` under the GP prior."""
    X = _as_points(design, kernel.dim)
    y = np.asarray(outputs, dtype=float).ravel()
    K = kernel(X, X)
    if jitter is None:
        L, _ = _factorize(K, kernel.variance)
    else:
        try:
            L = np.linalg.cholesky(K + jitter * np.eye(len(y)))
        except np.linalg.LinAlgError:
            raise IllConditionedError("covariance not positive definite") from None
    r = solve_triangular(L, y - mean(X), lower=True, check_finite=False)
    return float(-0.5 * r @ r - np.sum(np.log(np.diag(L))) - 0.5 * len(y) * np.log(2 * np.pi))


@dataclass
class _Profile:
    loglik: float
    beta: np.ndarray
    sigma2: float
    rel_jitter: float


def _profile(X: np.ndarray, y: np.ndarray, family: KernelFamily,
             lengthscales: np.ndarray) -> _Profile:
    """Concentrated likelihood: GLS trend and analytic variance for fixed lengthscales."""
    n = len(y)
    spec = KernelSpec(family, 1.0, lengthscales)
    L, rel = _factorize(spec.correlation(X, X), 1.0)
    F = trend_basis(X)
    Ft = solve_triangular(L, F, lower=True, check_finite=False)
    yt = solve_triangular(L, y, lower=True, check_finite=False)
    beta, *_ = np.linalg.lstsq(Ft, yt, rcond=None)
    resid = yt - Ft @ beta
    sigma2 = max(float(resid @ resid) / n, VARIANCE_FLOOR)
    loglik = (-0.5 * n * (np.log(2 * np.pi * sigma2) + 1.0)
              - float(np.sum(np.log(np.diag(L)))))
    return _Profile(loglik, beta, sigma2, rel)


def profiled_log_likelihood(design, outputs, family, lengthscales) -> float:
    """Log-likelihood maximised over trend and variance at fixed lengthscales."""
    X = np.array(design, dtype=float, ndmin=2)
    y = np.asarray(outputs, dtype=float).ravel()
    return _profile(X, y, KernelFamily.parse(family), np.asarray(lengthscales, float)).loglik


def lengthscale_bounds(design: np.ndarray, factors=LOG_BOUND_FACTORS):
    """Per-dimension search box for lengthscales, as multiples of the design range."""
    span = np.ptp(design, axis=0)
    span = np.where(span > 0, span, 1.0)
    return factors[0] * span, factors[1] * span


def _check_design(X: np.ndarray, y: np.ndarray):
    n, d = X.shape
    if y.size != n:
        raise UsageError("design and outputs disagree on the number of samples")
    if n < d + 2:
        raise InsufficientDataError(f"need at least d+2={d + 2} samples, got {n}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise UsageError("training data must be finite")
    if len(np.unique(X, axis=0)) < n:
        raise IllConditionedError("design contains duplicate rows")


def fit(design, outputs, family="se", seed: int = 0, restarts: int = 5,
        bounds=LOG_BOUND_FACTORS) -> GPModel:
    """Maximum-likelihood fit of a GP with linear trend.

    Lengthscales are searched in log space by bounded Nelder-Mead from
    ``restarts`` starting points; the first start sits at a fixed fraction of
    each coordinate's range, the others are drawn uniformly in the log box
    from ``np.random.default_rng(seed)``.

    Parameters
    ----------
    design : (n, d) array
    outputs : (n,) array
    family : KernelFamily or str
    seed : int
    restarts : int
        Number of local searches, at least 1.
    bounds : (float, float)
        Lengthscale search range as multiples of each coordinate's design range.

    Returns
    -------
    GPModel
    """
    X = np.array(design, dtype=float, ndmin=2)
    y = np.array(outputs, dtype=float).ravel()
    family = KernelFamily.parse(family)
    _check_design(X, y)
    n, d = X.shape
    lo, hi = lengthscale_bounds(X, bounds)

    if np.ptp(y) == 0.0:
        kernel = KernelSpec(family, VARIANCE_FLOOR, np.sqrt(lo * hi))
        mean = PriorMean(y[0], np.zeros(d))
        return condition(X, y, kernel, mean)

    log_lo, log_hi = np.log(lo), np.log(hi)
    rng = np.random.default_rng(seed)
    starts = [np.log(np.clip(0.5 * np.ptp(X, axis=0), lo, hi))]
    starts += [rng.uniform(log_lo, log_hi) for _ in range(max(restarts, 1) - 1)]

    def objective(log_theta):
        try:
            return -_profile(X, y, family, np.exp(log_theta)).loglik
        except IllConditionedError:
            return np.inf

    best = None
    for i, x0 in enumerate(starts):
        res = minimize(objective, np.clip(x0, log_lo, log_hi), method="Nelder-Mead",
                       bounds=list(zip(log_lo, log_hi)),
                       options={"xatol": 1e-6, "fatol": 1e-10, "maxiter": 400 * d})
        logger.debug("restart %d: loglik=%.6g theta=%s", i, -res.fun, np.exp(res.x))
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise FitError("likelihood could not be evaluated on any restart",
                       best_state={"starts": np.exp(np.array(starts))})

    theta = np.exp(best.x)
    prof = _profile(X, y, family, theta)
    kernel = KernelSpec(family, prof.sigma2, theta)
    mean = PriorMean(prof.beta[0], prof.beta[1:])
    return condition(X, y, kernel, mean, jitter=prof.rel_jitter * prof.sigma2)
