import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from flowemu.emulator import loo_mse
from flowemu.errors import IllConditionedError, InsufficientDataError
from flowemu.gp import (KernelFamily, KernelSpec, PriorMean, condition, fit, kernel_eval,
                        log_marginal_likelihood, profiled_log_likelihood, trend_basis)

FAMILIES = list(KernelFamily)


def dense_predict(X, y, theta, sigma2, family, xs, beta=None, jitter=0.0):
    """Textbook universal-kriging prediction by explicit dense inversion."""
    spec = KernelSpec(family, sigma2, theta)
    K = spec(X, X) + jitter * np.eye(len(y))
    Kinv = np.linalg.inv(K)
    F = trend_basis(X)
    if beta is None:
        beta = np.linalg.solve(F.T @ Kinv @ F, F.T @ Kinv @ y)
    k = spec(xs, X)
    mean = trend_basis(xs) @ beta + k @ Kinv @ (y - F @ beta)
    var = sigma2 - np.einsum("ij,jk,ik->i", k, Kinv, k)
    return mean, var


# kernel values -----------------------------------------------------------

@pytest.mark.parametrize("sigma2", [0.3, 1.0, 7.5])
def test_se_at_zero_distance_is_variance(sigma2):
    spec = KernelSpec("se", sigma2, [0.7, 2.0])
    assert kernel_eval(spec, [0.1, -3.0], [0.1, -3.0]) == pytest.approx(sigma2, rel=1e-15)


def test_se_unit_distance():
    spec = KernelSpec("se", 1.0, [1.0])
    assert kernel_eval(spec, [0.0], [1.0]) == pytest.approx(np.exp(-0.5), abs=1e-15)
    assert kernel_eval(spec, [0.0], [1.0]) == pytest.approx(0.60653, abs=1e-5)


def test_se_flat_limit():
    spec = KernelSpec("se", 1.0, [1e6])
    assert abs(kernel_eval(spec, [0.0], [1.0]) - 1.0) < 1e-10


def test_matern_and_exponential_closed_forms():
    r = 0.8
    m32 = KernelSpec("matern32", 2.0, [1.0])
    ex = KernelSpec("exponential", 2.0, [1.0])
    s3 = np.sqrt(3.0) * r
    assert kernel_eval(m32, [0.0], [r]) == pytest.approx(2.0 * (1 + s3) * np.exp(-s3), rel=1e-14)
    assert kernel_eval(ex, [0.0], [r]) == pytest.approx(2.0 * np.exp(-r), rel=1e-14)


def test_product_structure():
    spec = KernelSpec("matern32", 1.0, [0.5, 2.0])
    a = KernelSpec("matern32", 1.0, [0.5])
    b = KernelSpec("matern32", 1.0, [2.0])
    x, z = np.array([0.2, 1.0]), np.array([-0.4, 2.5])
    assert kernel_eval(spec, x, z) == pytest.approx(
        kernel_eval(a, x[:1], z[:1]) * kernel_eval(b, x[1:], z[1:]), rel=1e-14)


points = arrays(np.float64, st.tuples(st.integers(1, 20), st.just(2)),
                elements=st.floats(-5, 5, allow_nan=False))


@given(points, st.sampled_from(FAMILIES), st.floats(0.05, 5.0), st.floats(0.1, 10.0))
def test_gram_symmetric_psd(X, family, theta, sigma2):
    spec = KernelSpec(family, sigma2, [theta, 2 * theta])
    K = spec(X, X)
    assert np.array_equal(K, K.T)
    assert np.linalg.eigvalsh(K).min() >= -1e-8 * sigma2


@given(points, st.sampled_from(FAMILIES), arrays(np.float64, 2, elements=st.floats(-3, 3)))
def test_kernel_is_stationary(X, family, h):
    spec = KernelSpec(family, 1.3, [0.8, 1.7])
    np.testing.assert_allclose(spec(X, X[::-1]), spec(X + h, X[::-1] + h), atol=1e-12)


def test_sample_path_roughness_ordering():
    # mean-squared increments of prior sample paths on a fine grid
    x = np.linspace(0, 1, 201)[:, None]
    z = np.random.default_rng(0).standard_normal((201, 50))
    msi = {}
    for family in FAMILIES:
        K = KernelSpec(family, 1.0, [0.3])(x, x)
        w, V = np.linalg.eigh(K)
        paths = (V * np.sqrt(np.clip(w, 0, None))) @ z
        msi[family] = np.mean(np.diff(paths, axis=0) ** 2)
    assert msi[KernelFamily.EXPONENTIAL] > msi[KernelFamily.MATERN32] > msi[KernelFamily.SE]


# conditioning and prediction -------------------------------------------

def test_two_point_closed_form():
    X = np.array([[0.0], [0.7]])
    y = np.array([1.0, -0.5])
    sigma2, theta = 1.7, 0.4
    mean = PriorMean(0.2, [0.5])
    model = condition(X, y, KernelSpec("se", sigma2, [theta]), mean, jitter=0.0)
    xs = 0.3
    a = sigma2
    b = sigma2 * np.exp(-0.5 * (0.7 / theta) ** 2)
    k = sigma2 * np.exp(-0.5 * ((xs - X[:, 0]) / theta) ** 2)
    det = a * a - b * b
    r = y - (0.2 + 0.5 * X[:, 0])
    w = np.array([(a * k[0] - b * k[1]) / det, (a * k[1] - b * k[0]) / det])
    m_ref = 0.2 + 0.5 * xs + w @ r
    v_ref = sigma2 - w @ k
    m, v = model.predict([xs])
    assert abs(m - m_ref) < 1e-10
    assert abs(v - v_ref) < 1e-10


@pytest.mark.parametrize("family", FAMILIES)
def test_three_point_fit_matches_dense_oracle(family):
    X = np.array([[0.0], [0.4], [1.0]])
    y = np.array([0.3, 1.1, -0.2])
    model = fit(X, y, family, seed=0)
    xs = np.linspace(-0.5, 1.5, 17)[:, None]
    m_ref, v_ref = dense_predict(X, y, model.kernel.lengthscales, model.kernel.variance,
                                 family, xs, jitter=model.jitter)
    m, v = model.predict_many(xs)
    np.testing.assert_allclose(m, m_ref, atol=1e-10)
    np.testing.assert_allclose(v, np.clip(v_ref, 0, None), atol=1e-10)


@given(st.integers(4, 9), st.integers(0, 10_000), st.sampled_from(FAMILIES))
def test_interpolates_spread_design(n, seed, family):
    # one point per stratum, kept away from stratum edges (LHS-like spacing)
    rng = np.random.default_rng(seed)
    X = ((np.arange(n) + 0.25 + 0.5 * rng.uniform(size=n)) / n).reshape(-1, 1)
    y = np.sin(6 * X[:, 0]) + X[:, 0] ** 2
    model = fit(X, y, family, seed=seed, restarts=2)
    m, v = model.predict_many(X)
    assert np.max(np.abs(m - y)) <= 1e-6 * np.ptp(y)
    assert np.all(v <= model.jitter + 1e-9 * model.kernel.variance)


@given(st.integers(4, 9), st.integers(0, 10_000), st.sampled_from(FAMILIES))
def test_interpolates_clustered_design_within_jitter_scale(n, seed, family):
    rng = np.random.default_rng(seed)
    X = np.sort(rng.uniform(0, 1, n)).reshape(-1, 1)
    X[:, 0] += np.arange(n) * 1e-3
    y = np.sin(6 * X[:, 0]) + X[:, 0] ** 2
    model = fit(X, y, family, seed=seed, restarts=2)
    m, v = model.predict_many(X)
    sigma = np.sqrt(model.kernel.variance)
    assert np.max(np.abs(m - y)) <= 10 * np.sqrt(model.jitter) * sigma
    assert np.all(v <= model.jitter + 1e-9 * model.kernel.variance)


@given(arrays(np.float64, (30, 2), elements=st.floats(-10, 10, allow_nan=False)))
def test_variance_bounds(xs):
    rng = np.random.default_rng(3)
    X = rng.uniform(-2, 2, (12, 2))
    y = np.cos(X[:, 0]) * X[:, 1]
    model = fit(X, y, "se", restarts=2)
    _, v = model.predict_many(xs)
    assert np.all(v >= 0)
    assert np.all(v <= model.kernel.variance + model.jitter)


def test_far_field_reverts_to_prior():
    X = np.linspace(0, 1, 6)[:, None]
    y = np.sin(3 * X[:, 0])
    model = fit(X, y, "se")
    far = np.array([[1.0 + 12 * model.kernel.lengthscales[0]]])
    m, v = model.predict_many(far)
    assert m[0] == pytest.approx(model.mean(far)[0], abs=1e-8 * max(1, abs(m[0])))
    assert v[0] == pytest.approx(model.kernel.variance, rel=1e-8)


def test_constant_outputs_give_constant_model():
    X = np.array([[0.0], [0.5], [1.0]])
    model = fit(X, np.full(3, 4.2), "se")
    m, v = model.predict_many(np.linspace(-3, 3, 25)[:, None])
    np.testing.assert_allclose(m, 4.2, atol=1e-12)
    assert np.all(v <= 1e-12)


def test_linear_outputs_loo_vanishes():
    X = np.linspace(-1, 2, 10)[:, None]
    model = fit(X, 2 + 3 * X[:, 0], "se")
    assert loo_mse(model) < 1e-10


def test_sine_loo_and_dense_grid():
    X = np.linspace(0, 2 * np.pi, 12)[:, None]
    model = fit(X, np.sin(X[:, 0]), "se")
    assert loo_mse(model) < 1e-3
    grid = np.linspace(0, 2 * np.pi, 1001)[:, None]
    assert np.max(np.abs(model.predict_many(grid, return_var=False) - np.sin(grid[:, 0]))) < 1e-2


def test_duplicate_rows_rejected():
    X = np.array([[0.0], [0.5], [0.5], [1.0]])
    with pytest.raises(IllConditionedError):
        fit(X, np.arange(4.0))


def test_too_few_points_rejected():
    with pytest.raises(InsufficientDataError):
        fit(np.zeros((3, 2)) + np.arange(3)[:, None], np.arange(3.0))


# likelihood -------------------------------------------------------------

def test_single_point_likelihood_is_gaussian_density():
    spec = KernelSpec("se", 2.5, [1.0])
    mean = PriorMean(0.4, [1.5])
    x, y, jitter = 0.3, 2.0, 1e-9
    ll = log_marginal_likelihood([[x]], [y], spec, mean, jitter=jitter)
    s2 = 2.5 + jitter
    ref = -0.5 * np.log(2 * np.pi * s2) - 0.5 * (y - 0.4 - 1.5 * x) ** 2 / s2
    assert ll == pytest.approx(ref, rel=1e-13)


def test_more_jitter_never_tightens_interpolation():
    X = np.linspace(0, 1, 8)[:, None]
    y = np.sin(5 * X[:, 0])
    base = fit(X, y, "se")
    resid = []
    for jitter in base.kernel.variance * 1e-10 * 2.0 ** np.arange(0, 24):
        model = condition(X, y, base.kernel, base.mean, jitter=jitter)
        resid.append(np.max(np.abs(model.predict_many(X, return_var=False) - y)))
    resid = np.array(resid)
    assert np.all(np.diff(resid) >= -1e-12)


def test_fit_is_a_local_maximum():
    rng = np.random.default_rng(1)
    X = rng.uniform(0, 1, (15, 2))
    y = np.sin(4 * X[:, 0]) + X[:, 1] ** 2
    model = fit(X, y, "se")
    theta = model.kernel.lengthscales
    best = profiled_log_likelihood(X, y, "se", theta)
    for k in range(2):
        for step in (-0.02, 0.02):
            t = theta.copy()
            t[k] *= np.exp(step)
            assert profiled_log_likelihood(X, y, "se", t) <= best + 1e-6


def test_fit_deterministic_given_seed():
    rng = np.random.default_rng(2)
    X = rng.uniform(0, 1, (10, 2))
    y = X[:, 0] * np.exp(X[:, 1])
    a, b = fit(X, y, seed=7), fit(X, y, seed=7)
    assert np.array_equal(a.kernel.lengthscales, b.kernel.lengthscales)
    assert np.array_equal(a.alpha, b.alpha)
