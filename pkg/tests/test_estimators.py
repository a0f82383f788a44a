import math

import numpy as np
import pytest

from errors import DataError, EstimationError
from estimators import (
    INTERCEPT,
    LagLikelihood,
    error_concentrated_loglik,
    fit_gwr,
    fit_model,
    fit_ols,
    fit_spatial_error,
    fit_spatial_lag,
    gwr_hat_matrix,
    lag_concentrated_loglik,
    log_det_system,
    numerical_hessian,
    predict,
    predict_gwr,
    select_bandwidth,
)
from spatial_weights import KernelSpec, build_queen_contiguity, row_standardize


def _two_clusters(n_each=30, seed=0, n_east=None, noise=0.0):
    """West cluster y = 1 + 2x, east cluster y = 1 - 2x, ~500 miles apart"""
    n_east = n_each if n_east is None else n_east
    n = n_each + n_east
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    lon = np.concatenate([rng.uniform(-80.3, -79.7, n_each), rng.uniform(-70.3, -69.7, n_east)])
    lat = rng.uniform(41.7, 42.3, n)
    slope = np.where(np.arange(n) < n_each, 2.0, -2.0)
    y = 1.0 + slope * x
    if noise:
        y = y + rng.normal(0.0, noise, n)
    return x, y, np.column_stack([lon, lat])


# --- ModelFrame ---

def test_frame_validation(make_frame):
    X = np.arange(10.0).reshape(5, 2)
    with pytest.raises(DataError, match="duplicate"):
        make_frame(X, np.ones(5), columns=("a", "a"))
    with pytest.raises(DataError, match="Intercept"):
        make_frame(X, np.ones(5), columns=(INTERCEPT, "b"))
    with pytest.raises(DataError, match="non-finite"):
        make_frame(X, np.array([1.0, np.nan, 1.0, 1.0, 1.0]))
    with pytest.raises(DataError, match="too few"):
        make_frame(X[:3], np.ones(3))


# --- OLS ---

def test_ols_exact_fit(make_frame):
    x = np.arange(1.0, 11.0)
    fit = fit_ols(make_frame(x, 3.0 + 2.0 * x))
    np.testing.assert_allclose(fit.beta, [3.0, 2.0], atol=1e-10)
    np.testing.assert_allclose(fit.residuals, 0.0, atol=1e-10)
    assert fit.columns == (INTERCEPT, "x1")
    assert fit.n_params == 3
    assert fit.rho is None


def test_ols_matches_normal_equations(make_frame):
    X = np.array([[1.0, 0.5], [2.0, -1.0], [3.0, 2.0], [4.0, 0.0], [5.0, 1.5], [6.0, -0.5]])
    y = np.array([2.0, 1.0, 7.5, 5.0, 9.0, 6.5])
    fit = fit_ols(make_frame(X, y))

    A = np.column_stack([np.ones(6), X])
    beta = np.linalg.solve(A.T @ A, A.T @ y)
    resid = y - A @ beta
    rss = resid @ resid
    se = np.sqrt(np.diag(rss / (6 - 3) * np.linalg.inv(A.T @ A)))
    ll = -3.0 * (math.log(2 * math.pi) + math.log(rss / 6) + 1.0)

    np.testing.assert_allclose(fit.beta, beta, rtol=1e-10)
    np.testing.assert_allclose(fit.std_errors, se, rtol=1e-10)
    assert fit.log_likelihood == pytest.approx(ll, rel=1e-12)
    assert fit.aic == pytest.approx(2 * 4 - 2 * ll, rel=1e-12)
    assert fit.sigma2 == pytest.approx(rss / 6, rel=1e-12)


def test_rank_deficient_design_names_column(make_frame):
    rng = np.random.default_rng(0)
    a = rng.normal(size=20)
    X = np.column_stack([a, rng.normal(size=20), 2.0 * a])
    with pytest.raises(EstimationError, match="'x3'"):
        fit_ols(make_frame(X, rng.normal(size=20)))


# --- log-determinant ---

def test_logdet_matches_dense_determinant(square_grid):
    w = row_standardize(build_queen_contiguity(square_grid(4, 4)))
    logdet = log_det_system(w)
    assert logdet(0.0) == 0.0
    lo, hi = logdet.bounds
    assert hi == pytest.approx(1.0, abs=1e-10)
    assert lo < -1.0 + 1e-9
    W = w.matrix.toarray()
    for rho in (-0.5, 0.2, 0.75, 0.95):
        sign, value = np.linalg.slogdet(np.eye(16) - rho * W)
        assert sign > 0
        assert logdet(rho) == pytest.approx(value, abs=1e-10)


def test_logdet_binary_weights(square_grid):
    w = build_queen_contiguity(square_grid(3, 3))
    logdet = log_det_system(w)
    W = w.matrix.toarray()
    _, value = np.linalg.slogdet(np.eye(9) - 0.1 * W)
    assert logdet(0.1) == pytest.approx(value, abs=1e-10)
    assert logdet.bounds[1] == pytest.approx(1.0 / np.linalg.eigvalsh(W).max(), rel=1e-10)


def test_logdet_derivative_matches_finite_difference(lattice_20):
    logdet = log_det_system(lattice_20[0])
    h = 1e-6
    for rho in (-0.3, 0.1, 0.6):
        numeric = (logdet(rho + h) - logdet(rho - h)) / (2 * h)
        assert logdet.derivative(rho) == pytest.approx(numeric, rel=1e-5)


def test_numerical_hessian_of_quadratic():
    A = np.array([[-3.0, 1.0], [1.0, -2.0]])
    H = numerical_hessian(lambda t: A @ t, np.array([0.4, -1.2]))
    np.testing.assert_allclose(H, A, atol=1e-8)


# --- Spatial Lag ---

def test_lag_at_zero_rho_is_ols(lag_dgp, lattice_20):
    frame = lag_dgp(seed=2)
    w = lattice_20[0]
    lag = fit_spatial_lag(frame, w, rho=0.0)
    ols = fit_ols(frame)
    np.testing.assert_allclose(lag.beta, ols.beta, atol=1e-10)
    np.testing.assert_allclose(lag.residuals, ols.residuals, atol=1e-10)
    assert lag.log_likelihood == pytest.approx(ols.log_likelihood, abs=1e-8)


def test_lag_rho_matches_grid_search(lag_dgp, lattice_20):
    frame = lag_dgp(seed=3, rho=0.5)
    w = lattice_20[0]
    logdet = log_det_system(w)
    fit = fit_spatial_lag(frame, w, logdet=logdet)
    grid = np.arange(-0.9, 0.99, 1e-3)
    values = lag_concentrated_loglik(frame, w, grid, logdet=logdet)
    best = grid[np.argmax(values)]
    assert abs(fit.rho - best) <= 1e-3
    assert fit.log_likelihood >= values.max() - 1e-9
    assert fit.converged
    assert fit.n_params == 5
    assert fit.rho_std_error > 0
    assert fit.rho_p_value < 0.001


def test_lag_full_and_concentrated_agree_at_estimate(lag_dgp, lattice_20):
    frame = lag_dgp(seed=4)
    w = lattice_20[0]
    fit = fit_spatial_lag(frame, w)
    lik = LagLikelihood(frame, w)
    theta = np.concatenate([[fit.rho], fit.beta, [fit.sigma2]])
    assert lik.full(theta) == pytest.approx(lik.concentrated(fit.rho), abs=1e-10)
    assert fit.log_likelihood == pytest.approx(lik.concentrated(fit.rho), abs=1e-10)
    # the beta and sigma2 components of the score vanish at the maximum
    np.testing.assert_allclose(lik.score(theta)[1:], 0.0, atol=1e-6)


def test_lag_weight_order_checked(lag_dgp, lattice_20, make_frame):
    frame = lag_dgp(seed=5)
    shuffled = make_frame(frame.X, frame.y, centroids=frame.centroids, zone_ids=tuple(reversed(frame.zone_ids)))
    with pytest.raises(DataError, match="zone order"):
        fit_spatial_lag(shuffled, lattice_20[0])


def test_lag_binary_weights_warns(square_grid, make_frame):
    rng = np.random.default_rng(8)
    w = build_queen_contiguity(square_grid(6, 6))
    frame = make_frame(rng.normal(size=(36, 1)), rng.normal(size=36), zone_ids=w.zone_ids)
    fit = fit_spatial_lag(frame, w, rho=0.0)
    assert fit.weights_standardized is False
    assert any("binary" in m for m in fit.warnings)


@pytest.mark.slow
def test_lag_monte_carlo_recovery(lag_dgp, lattice_20):
    w = lattice_20[0]
    logdet = log_det_system(w)
    rhos, betas = [], []
    for seed in range(50):
        fit = fit_spatial_lag(lag_dgp(seed=100 + seed, rho=0.5), w, logdet=logdet)
        rhos.append(fit.rho)
        betas.append(fit.beta)
    assert 0.4 <= np.mean(rhos) <= 0.6
    np.testing.assert_allclose(np.mean(betas, axis=0), [1.0, 2.0, -1.0], atol=0.1)


@pytest.mark.slow
def test_lag_on_independent_data_reduces_to_ols(lag_dgp, lattice_20):
    w = lattice_20[0]
    logdet = log_det_system(w)
    rhos, slopes, ols_se, se_ratios = [], [], [], []
    for seed in range(50):
        frame = lag_dgp(seed=500 + seed, rho=0.0)
        lag = fit_spatial_lag(frame, w, logdet=logdet)
        ols = fit_ols(frame)
        rhos.append(lag.rho)
        slopes.append(lag.beta[1:])
        ols_se.append(ols.std_errors[1:])
        se_ratios.append(lag.std_errors[1:] / ols.std_errors[1:])
    assert np.mean(np.abs(rhos)) < 0.05
    assert np.all(np.abs(np.mean(slopes, axis=0) - [2.0, -1.0]) < 2 * np.mean(ols_se, axis=0))
    # slopes only: the intercept covaries with rho under the lag likelihood
    np.testing.assert_allclose(np.mean(se_ratios, axis=0), 1.0, atol=0.05)


@pytest.mark.slow
def test_concentrated_likelihoods_match_grid_oracle(lag_dgp, lattice_20):
    w = lattice_20[0]
    logdet = log_det_system(w)
    lo, hi = LagLikelihood(lag_dgp(seed=0), w, logdet).interval()
    grid = np.linspace(lo, hi, 2001)
    step = grid[1] - grid[0]
    for seed in range(10):
        lag_frame = lag_dgp(seed=700 + seed, rho=0.4)
        lag = fit_spatial_lag(lag_frame, w, logdet=logdet)
        values = lag_concentrated_loglik(lag_frame, w, grid, logdet=logdet)
        assert abs(lag.rho - grid[np.argmax(values)]) <= step
        assert lag.log_likelihood == pytest.approx(lag_concentrated_loglik(lag_frame, w, lag.rho, logdet), abs=1e-10)

        err_frame = lag_dgp(seed=800 + seed, rho=0.4, error_process=True)
        sem = fit_spatial_error(err_frame, w, logdet=logdet)
        values = error_concentrated_loglik(err_frame, w, grid, logdet=logdet)
        assert abs(sem.rho - grid[np.argmax(values)]) <= step
        assert sem.log_likelihood == pytest.approx(
            error_concentrated_loglik(err_frame, w, sem.rho, logdet), abs=1e-10
        )


def test_exact_fit_is_a_numerical_failure(lattice_20, make_frame):
    w, centroids = lattice_20
    X = np.random.default_rng(15).normal(size=(w.n, 2))
    frame = make_frame(X, 1.0 + X @ [2.0, -1.0], centroids=centroids, zone_ids=w.zone_ids)
    for fit in (fit_spatial_lag, fit_spatial_error):
        with pytest.raises(EstimationError, match="exactly") as excinfo:
            fit(frame, w)
        assert excinfo.value.exit_code == 4


# --- Spatial Error ---

def test_error_at_zero_lambda_is_ols(lag_dgp, lattice_20):
    frame = lag_dgp(seed=6)
    ols = fit_ols(frame)
    sem = fit_spatial_error(frame, lattice_20[0], lam=0.0)
    np.testing.assert_allclose(sem.beta, ols.beta, atol=1e-10)
    np.testing.assert_allclose(sem.filtered_residuals, ols.residuals, atol=1e-10)
    assert sem.log_likelihood == pytest.approx(ols.log_likelihood, abs=1e-8)


def test_error_recovers_error_process(lag_dgp, lattice_20):
    frame = lag_dgp(seed=7, rho=0.6, error_process=True)
    fit = fit_spatial_error(frame, lattice_20[0])
    assert 0.4 < fit.rho < 0.8
    np.testing.assert_allclose(fit.beta[1:], [2.0, -1.0], atol=0.2)
    assert abs(fit.beta[0] - 1.0) < 0.5
    assert fit.model_kind == "spatial_error"
    assert fit.log_likelihood > fit_ols(frame).log_likelihood


@pytest.mark.slow
def test_error_monte_carlo_recovery(lag_dgp, lattice_20):
    w = lattice_20[0]
    logdet = log_det_system(w)
    lams = [
        fit_spatial_error(lag_dgp(seed=900 + seed, rho=0.5, error_process=True), w, logdet=logdet).rho
        for seed in range(50)
    ]
    assert 0.38 <= np.mean(lams) <= 0.62


@pytest.mark.slow
def test_noise_column_does_not_buy_aic(lag_dgp, lattice_20, make_frame):
    w = lattice_20[0]
    logdet = log_det_system(w)
    ols_drop, lag_drop = [], []
    for seed in range(50):
        frame = lag_dgp(seed=1000 + seed, rho=0.5)
        noise = np.random.default_rng(seed).normal(size=frame.n)
        padded = make_frame(
            np.column_stack([frame.X, noise]), frame.y, centroids=frame.centroids, zone_ids=frame.zone_ids
        )
        ols_drop.append(fit_ols(frame).aic - fit_ols(padded).aic)
        lag_drop.append(
            fit_spatial_lag(frame, w, logdet=logdet).aic - fit_spatial_lag(padded, w, logdet=logdet).aic
        )
    assert np.mean(ols_drop) < 2.0
    assert np.mean(lag_drop) < 2.0


# --- GWR ---

def test_gwr_with_huge_bandwidth_is_ols(make_frame):
    rng = np.random.default_rng(1)
    n = 40
    centroids = np.column_stack([rng.uniform(-77, -75, n), rng.uniform(41, 43, n)])
    X = rng.normal(size=(n, 2))
    frame = make_frame(X, 1.0 + X @ [0.5, -1.5] + rng.normal(0, 0.3, n), centroids=centroids)
    gwr = fit_gwr(frame, KernelSpec("gaussian", 1e7))
    ols = fit_ols(frame)
    np.testing.assert_allclose(gwr.local_beta, np.tile(ols.beta, (n, 1)), atol=1e-6)
    assert gwr.effective_parameters == pytest.approx(3.0, abs=1e-6)


def test_gwr_recovers_two_regimes(make_frame):
    x, y, centroids = _two_clusters()
    frame = make_frame(x, y, centroids=centroids)
    fit = fit_gwr(frame, KernelSpec("bisquare", 100.0))
    np.testing.assert_allclose(fit.local_beta[:30], np.tile([1.0, 2.0], (30, 1)), atol=1e-8)
    np.testing.assert_allclose(fit.local_beta[30:], np.tile([1.0, -2.0], (30, 1)), atol=1e-8)
    np.testing.assert_allclose(fit.residuals, 0.0, atol=1e-8)


def test_gwr_adaptive_cluster_size_bandwidth(make_frame):
    x, y, centroids = _two_clusters(seed=3, noise=0.05)
    frame = make_frame(x, y, centroids=centroids)
    # 30 neighbours reach exactly the nearest zone of the other cluster, which gets weight 0
    fit = fit_gwr(frame, KernelSpec("bisquare", 30, adaptive=True))
    np.testing.assert_allclose(fit.local_beta[:30, 1], 2.0, atol=0.1)
    np.testing.assert_allclose(fit.local_beta[30:, 1], -2.0, atol=0.1)


def test_gwr_predict_at_new_locations(make_frame):
    x, y, centroids = _two_clusters()
    frame = make_frame(x, y, centroids=centroids)
    new_x = np.array([[0.5], [0.5]])
    new_centroids = np.array([[-80.0, 42.0], [-70.0, 42.0]])
    predicted = predict_gwr(frame, KernelSpec("bisquare", 100.0), new_x, new_centroids)
    np.testing.assert_allclose(predicted, [2.0, 0.0], atol=1e-8)
    with pytest.raises(DataError):
        predict_gwr(frame, KernelSpec("bisquare", 100.0), np.ones((2, 3)), new_centroids)


def test_gwr_hat_trace_two_ways(lag_dgp):
    frame = lag_dgp(seed=9).subset(range(120))
    spec = KernelSpec("bisquare", 30, adaptive=True)
    fit = fit_gwr(frame, spec)
    S = gwr_hat_matrix(frame, spec)
    np.testing.assert_allclose(fit.hat_diagonal, np.diag(S), atol=1e-10)
    assert fit.effective_parameters == pytest.approx(np.trace(S), abs=1e-8)
    assert frame.p + 1 - 1e-8 <= fit.effective_parameters <= frame.n
    np.testing.assert_allclose(frame.y - S @ frame.y, fit.residuals, atol=1e-8)


def test_gwr_threads_do_not_change_results(lag_dgp):
    frame = lag_dgp(seed=10).subset(range(100))
    spec = KernelSpec("gaussian", 20, adaptive=True)
    single = fit_gwr(frame, spec, n_jobs=1)
    pooled = fit_gwr(frame, spec, n_jobs=4)
    np.testing.assert_array_equal(single.local_beta, pooled.local_beta)
    assert single.aic == pooled.aic


def test_gwr_singular_local_design_raises(make_frame):
    x, y, centroids = _two_clusters()
    frame = make_frame(x, y, centroids=centroids)
    with pytest.raises(EstimationError, match="singular"):
        fit_gwr(frame, KernelSpec("bisquare", 0.01))


def _aicc_or_inf(frame, spec):
    try:
        return fit_gwr(frame, spec).aic
    except (EstimationError, DataError):
        return math.inf


def test_select_bandwidth_matches_enumeration(make_frame):
    rng = np.random.default_rng(12)
    n = 150
    lon, lat = rng.uniform(-78, -74, n), rng.uniform(40, 44, n)
    X = rng.normal(size=(n, 2))
    slope = 1.0 + 0.5 * (lon + 76.0)
    y = 0.5 + slope * X[:, 0] - X[:, 1] + rng.normal(0, 0.3, n)
    frame = make_frame(X, y, centroids=np.column_stack([lon, lat]))

    spec = select_bandwidth(frame, "bisquare", adaptive=True)
    assert spec.adaptive and spec.kind == "bisquare"
    assert frame.p + 2 <= spec.bandwidth <= n - 1
    candidates = range(frame.p + 2, n)
    enumerated = [_aicc_or_inf(frame, KernelSpec("bisquare", k, True)) for k in candidates]
    assert abs(spec.bandwidth - candidates[int(np.argmin(enumerated))]) <= 1


@pytest.mark.slow
def test_homogeneous_coefficients_select_wide_bandwidth(make_frame):
    n = 40
    wide = 0
    for seed in range(20):
        rng = np.random.default_rng(1200 + seed)
        centroids = np.column_stack([rng.uniform(-77, -75, n), rng.uniform(41, 43, n)])
        X = rng.normal(size=(n, 2))
        frame = make_frame(X, 1.0 + X @ [2.0, -1.0] + rng.normal(0, 0.5, n), centroids=centroids)
        lower, upper = frame.p + 2, n - 1
        spec = select_bandwidth(frame, "bisquare", adaptive=True)
        wide += spec.bandwidth >= lower + 0.75 * (upper - lower)
    assert wide >= 16


@pytest.mark.slow
def test_two_clusters_select_narrow_bandwidth(make_frame):
    narrow = 0
    for seed in range(20):
        x, y, centroids = _two_clusters(n_each=20, n_east=40, seed=1300 + seed, noise=0.1)
        frame = make_frame(x, y, centroids=centroids)
        narrow += select_bandwidth(frame, "bisquare", adaptive=True).bandwidth < frame.n / 2
    assert narrow >= 16


def test_select_bandwidth_fixed_range_and_minimum_size(make_frame):
    x, y, centroids = _two_clusters(n_each=20)
    frame = make_frame(x, y + np.random.default_rng(0).normal(0, 0.1, 40), centroids=centroids)
    spec = select_bandwidth(frame, "gaussian", adaptive=False)
    assert not spec.adaptive
    assert spec.bandwidth > 0

    small = frame.subset(range(20))
    with pytest.raises(DataError, match="at least 30"):
        select_bandwidth(small, "gaussian", adaptive=True)


# --- dispatch and prediction ---

def test_fit_model_dispatch(lag_dgp, lattice_20):
    frame = lag_dgp(seed=11)
    assert fit_model("ols", frame).model_kind == "ols"
    with pytest.raises(DataError, match="unknown model kind"):
        fit_model("sarar", frame)
    with pytest.raises(DataError, match="kernel"):
        fit_model("gwr", frame)


def test_predict_is_trend_only(lag_dgp, lattice_20):
    frame = lag_dgp(seed=13)
    fit = fit_spatial_lag(frame, lattice_20[0])
    x_new = np.array([[0.0, 0.0], [1.0, -1.0]])
    np.testing.assert_allclose(predict(fit, x_new), fit.beta[0] + x_new @ fit.beta[1:])
    with pytest.raises(DataError):
        predict(fit, np.ones((1, 3)))


def test_fits_are_deterministic(lag_dgp, lattice_20):
    frame = lag_dgp(seed=14)
    a = fit_spatial_error(frame, lattice_20[0])
    b = fit_spatial_error(frame, lattice_20[0])
    assert a.to_dict() == b.to_dict()
