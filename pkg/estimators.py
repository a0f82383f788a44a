"""
Estimators Module
OLS, maximum-likelihood Spatial Lag and Spatial Error models, and Geographically Weighted Regression
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from errors import DataError, EstimationError
from search import golden_section
from spatial_weights import KernelSpec, haversine_matrix, kernel_from_distances

logger = logging.getLogger(__name__)

MODEL_KINDS = ("ols", "spatial_lag", "spatial_error", "gwr")
INTERCEPT = "Intercept"
LN2PI = math.log(2.0 * math.pi)

RHO_MARGIN = 1e-6
RHO_TOL = 1e-8
HESSIAN_REL_STEP = 1e-5
HESSIAN_ABS_STEP = 1e-7
# residual variance below this share of the target mean square counts as an exact fit
EXACT_FIT_SHARE = 1e-12


@dataclass(frozen=True)
class ModelFrame:
    """Target, standardized predictors (no intercept column) and zone centroids"""

    zone_ids: tuple
    y: np.ndarray
    X: np.ndarray
    columns: tuple
    centroids: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        centroids = np.asarray(self.centroids, dtype=float).reshape(-1, 2)
        zone_ids = tuple(str(z) for z in self.zone_ids)
        columns = tuple(str(c) for c in self.columns)
        n = y.shape[0]
        if X.shape != (n, len(columns)):
            raise DataError(f"predictor matrix shape {X.shape} does not match {n} rows x {len(columns)} columns")
        if len(zone_ids) != n or centroids.shape[0] != n:
            raise DataError("zone ids, centroids and target must have the same length")
        if len(set(columns)) != len(columns):
            raise DataError(f"duplicate predictor column names in {columns}")
        if INTERCEPT in columns:
            raise DataError("the intercept is added by the estimators; drop the 'Intercept' column")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise DataError("model frame contains missing or non-finite values")
        if n < len(columns) + 2:
            raise DataError(f"{n} rows is too few for {len(columns)} predictors (need at least {len(columns) + 2})")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "centroids", centroids)
        object.__setattr__(self, "zone_ids", zone_ids)
        object.__setattr__(self, "columns", columns)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def design(self):
        return np.column_stack([np.ones(self.n), self.X])

    def subset(self, rows):
        rows = np.asarray(rows, dtype=int)
        return ModelFrame(
            zone_ids=tuple(self.zone_ids[i] for i in rows),
            y=self.y[rows],
            X=self.X[rows],
            columns=self.columns,
            centroids=self.centroids[rows],
        )


def _floats(values):
    return [None if v is None or not math.isfinite(v) else float(v) for v in np.asarray(values, dtype=float).ravel()]


def _float(value):
    return None if value is None or not math.isfinite(value) else float(value)


@dataclass(frozen=True)
class FitResult:
    model_kind: str
    columns: tuple
    beta: np.ndarray
    std_errors: np.ndarray
    p_values: np.ndarray
    rho: float
    rho_std_error: float
    rho_p_value: float
    sigma2: float
    log_likelihood: float
    aic: float
    adjusted_r2: float
    residuals: np.ndarray
    converged: bool
    n_params: int
    weights_standardized: bool = None
    filtered_residuals: np.ndarray = None
    warnings: tuple = field(default_factory=tuple)

    @property
    def n(self):
        return self.residuals.shape[0]

    def to_dict(self):
        out = {
            "model_kind": self.model_kind,
            "columns": list(self.columns),
            "beta": _floats(self.beta),
            "std_errors": _floats(self.std_errors),
            "p_values": _floats(self.p_values),
            "rho": _float(self.rho),
            "rho_std_error": _float(self.rho_std_error),
            "rho_p_value": _float(self.rho_p_value),
            "sigma2": _float(self.sigma2),
            "log_likelihood": _float(self.log_likelihood),
            "aic": _float(self.aic),
            "adjusted_r2": _float(self.adjusted_r2),
            "n": self.n,
            "n_params": self.n_params,
            "converged": self.converged,
            "weights_standardized": self.weights_standardized,
        }
        return out


@dataclass(frozen=True)
class GwrResult:
    columns: tuple
    local_beta: np.ndarray
    local_std_errors: np.ndarray
    kernel: KernelSpec
    effective_parameters: float
    sigma2: float
    log_likelihood: float
    aic: float
    aic_classic: float
    adjusted_r2: float
    residuals: np.ndarray
    hat_diagonal: np.ndarray
    zone_ids: tuple = ()
    warnings: tuple = field(default_factory=tuple)

    model_kind = "gwr"

    @property
    def n(self):
        return self.residuals.shape[0]

    @property
    def mean_beta(self):
        return self.local_beta.mean(axis=0)

    @property
    def mean_std_errors(self):
        return self.local_std_errors.mean(axis=0)

    def to_dict(self):
        return {
            "model_kind": "gwr",
            "columns": list(self.columns),
            "mean_beta": _floats(self.mean_beta),
            "mean_std_errors": _floats(self.mean_std_errors),
            "kernel": self.kernel.to_dict(),
            "effective_parameters": _float(self.effective_parameters),
            "sigma2": _float(self.sigma2),
            "log_likelihood": _float(self.log_likelihood),
            "aic": _float(self.aic),
            "aic_kind": "AICc",
            "aic_classic": _float(self.aic_classic),
            "adjusted_r2": _float(self.adjusted_r2),
            "n": self.n,
        }


def _dependent_column(X, names):
    for j in range(1, X.shape[1] + 1):
        if np.linalg.matrix_rank(X[:, :j]) < j:
            return names[j - 1]
    return None


def check_rank(X, names):
    if np.linalg.matrix_rank(X) < X.shape[1]:
        culprit = _dependent_column(X, names)
        raise EstimationError(f"design matrix is rank deficient; column '{culprit}' is linearly dependent on earlier columns")


def _residual_variance(e, n, floor):
    sig2 = float(e @ e) / n
    if not sig2 > floor:
        raise EstimationError(
            f"residual variance {sig2:.3g} is zero to working precision; the predictors fit the target exactly"
        )
    return sig2


def _variance_floor(y):
    scale = float(y @ y) / y.shape[0]
    return EXACT_FIT_SHARE * (scale if scale > 0 else 1.0)


def _gaussian_loglik(rss, n):
    with np.errstate(divide="ignore"):
        return -0.5 * n * (LN2PI + np.log(rss / n) + 1.0)


def _adjusted_r2(rss, y, df_resid_params):
    n = y.shape[0]
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss
    return 1.0 - (1.0 - r2) * (n - 1) / (n - df_resid_params - 1)


def fit_ols(frame):
    X = frame.design()
    names = (INTERCEPT,) + frame.columns
    check_rank(X, names)
    n, k = X.shape
    beta, *_ = np.linalg.lstsq(X, frame.y, rcond=None)
    resid = frame.y - X @ beta
    rss = float(resid @ resid)

    sigma2_unbiased = rss / (n - k)
    cov = sigma2_unbiased * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = beta / se
    p = 2.0 * stats.t.sf(np.abs(t), df=n - k)

    ll = float(_gaussian_loglik(rss, n))
    n_params = k + 1
    return FitResult(
        model_kind="ols",
        columns=names,
        beta=beta,
        std_errors=se,
        p_values=p,
        rho=None,
        rho_std_error=None,
        rho_p_value=None,
        sigma2=rss / n,
        log_likelihood=ll,
        aic=2.0 * n_params - 2.0 * ll,
        adjusted_r2=_adjusted_r2(rss, frame.y, frame.p),
        residuals=resid,
        converged=True,
        n_params=n_params,
    )


@dataclass(frozen=True)
class LogDeterminant:
    """ln|I - rho W| evaluated from the eigenvalues of W"""

    eigenvalues: np.ndarray

    @property
    def bounds(self):
        omega = np.real(self.eigenvalues)
        lo, hi = omega.min(), omega.max()
        lower = 1.0 / lo if lo < -1e-12 else -1.0
        upper = 1.0 / hi if hi > 1e-12 else 1.0
        return lower, upper

    def __call__(self, rho):
        with np.errstate(divide="ignore", invalid="ignore"):
            value = np.sum(np.log(1.0 - rho * self.eigenvalues))
        return float(np.real(value))

    def derivative(self, rho):
        return float(np.real(-np.sum(self.eigenvalues / (1.0 - rho * self.eigenvalues))))


def log_det_system(w):
    """
    Eigenvalues of W for the log-Jacobian.

    A row-standardized W = D^-1 C with symmetric binary C is similar to
    D^-1/2 C D^-1/2, so its spectrum comes from a symmetric solver and is real.
    """
    dense = w.matrix.toarray()
    try:
        if np.array_equal(dense, dense.T):
            omega = linalg.eigvalsh(dense)
        else:
            pattern = (dense != 0).astype(float)
            degree = pattern.sum(axis=1)
            scale = np.zeros_like(degree)
            scale[degree > 0] = 1.0 / degree[degree > 0]
            if np.array_equal(pattern, pattern.T) and np.allclose(dense, pattern * scale[:, None], rtol=0, atol=1e-12):
                root = np.sqrt(scale)
                omega = linalg.eigvalsh(root[:, None] * pattern * root[None, :])
            else:
                omega = linalg.eigvals(dense)
                if np.max(np.abs(np.imag(omega))) < 1e-10:
                    omega = np.real(omega)
    except (np.linalg.LinAlgError, linalg.LinAlgError) as e:
        raise EstimationError(f"eigenvalue computation for the log-determinant failed: {e}")
    return LogDeterminant(eigenvalues=np.sort(omega) if np.isrealobj(omega) else omega)


def numerical_hessian(score, theta):
    """Central differences of the analytic score, symmetrized"""
    theta = np.asarray(theta, dtype=float)
    m = theta.shape[0]
    H = np.zeros((m, m))
    for j in range(m):
        h = max(HESSIAN_REL_STEP * abs(theta[j]), HESSIAN_ABS_STEP)
        up, down = theta.copy(), theta.copy()
        up[j] += h
        down[j] -= h
        H[:, j] = (score(up) - score(down)) / (2.0 * h)
    return 0.5 * (H + H.T)


def _inference(H, theta):
    try:
        cov = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        return np.full(theta.shape, np.nan), False
    var = np.diag(cov)
    ok = bool(np.all(var > 0))
    with np.errstate(invalid="ignore"):
        return np.sqrt(var), ok


def _z_pvalues(estimate, se):
    with np.errstate(divide="ignore", invalid="ignore"):
        return 2.0 * stats.norm.sf(np.abs(np.asarray(estimate) / np.asarray(se)))


class LagLikelihood:
    """Concentrated and full log-likelihood of the Spatial Lag model"""

    def __init__(self, frame, w, logdet=None):
        self.X = frame.design()
        self.y = frame.y
        self.n = frame.n
        self.sig2_floor = _variance_floor(self.y)
        self.Wy = w.matrix @ self.y
        self.logdet = logdet if logdet is not None else log_det_system(w)
        b0, *_ = np.linalg.lstsq(self.X, self.y, rcond=None)
        b1, *_ = np.linalg.lstsq(self.X, self.Wy, rcond=None)
        self.b0, self.b1 = b0, b1
        self.e0 = self.y - self.X @ b0
        self.e1 = self.Wy - self.X @ b1

    def interval(self):
        lo, hi = self.logdet.bounds
        return lo + RHO_MARGIN, hi - RHO_MARGIN

    def concentrated(self, rho):
        e = self.e0 - rho * self.e1
        sig2 = _residual_variance(e, self.n, self.sig2_floor)
        return -0.5 * self.n * (LN2PI + 1.0) - 0.5 * self.n * math.log(sig2) + self.logdet(rho)

    def beta(self, rho):
        return self.b0 - rho * self.b1

    def residuals(self, rho, beta):
        return self.y - rho * self.Wy - self.X @ beta

    def full(self, theta):
        rho, beta, sig2 = theta[0], theta[1:-1], theta[-1]
        e = self.residuals(rho, beta)
        return -0.5 * self.n * (LN2PI + math.log(sig2)) + self.logdet(rho) - float(e @ e) / (2.0 * sig2)

    def score(self, theta):
        rho, beta, sig2 = theta[0], theta[1:-1], theta[-1]
        e = self.residuals(rho, beta)
        d_rho = self.logdet.derivative(rho) + float(self.Wy @ e) / sig2
        d_beta = self.X.T @ e / sig2
        d_sig2 = -0.5 * self.n / sig2 + float(e @ e) / (2.0 * sig2 ** 2)
        return np.concatenate([[d_rho], d_beta, [d_sig2]])


class ErrorLikelihood:
    """Concentrated and full log-likelihood of the Spatial Error model"""

    def __init__(self, frame, w, logdet=None):
        self.X = frame.design()
        self.y = frame.y
        self.n = frame.n
        self.sig2_floor = _variance_floor(self.y)
        self.w = w
        self.Wy = w.matrix @ self.y
        self.WX = w.matrix @ self.X
        self.logdet = logdet if logdet is not None else log_det_system(w)

    def interval(self):
        lo, hi = self.logdet.bounds
        return lo + RHO_MARGIN, hi - RHO_MARGIN

    def filtered_fit(self, lam):
        ys = self.y - lam * self.Wy
        Xs = self.X - lam * self.WX
        beta, *_ = np.linalg.lstsq(Xs, ys, rcond=None)
        return beta, ys - Xs @ beta

    def concentrated(self, lam):
        _, e = self.filtered_fit(lam)
        sig2 = _residual_variance(e, self.n, self.sig2_floor)
        return -0.5 * self.n * (LN2PI + 1.0) - 0.5 * self.n * math.log(sig2) + self.logdet(lam)

    def full(self, theta):
        lam, beta, sig2 = theta[0], theta[1:-1], theta[-1]
        u = self.y - self.X @ beta
        e = u - lam * (self.w.matrix @ u)
        return -0.5 * self.n * (LN2PI + math.log(sig2)) + self.logdet(lam) - float(e @ e) / (2.0 * sig2)

    def score(self, theta):
        lam, beta, sig2 = theta[0], theta[1:-1], theta[-1]
        u = self.y - self.X @ beta
        Wu = self.w.matrix @ u
        e = u - lam * Wu
        d_lam = self.logdet.derivative(lam) + float(Wu @ e) / sig2
        d_beta = (self.X - lam * self.WX).T @ e / sig2
        d_sig2 = -0.5 * self.n / sig2 + float(e @ e) / (2.0 * sig2 ** 2)
        return np.concatenate([[d_lam], d_beta, [d_sig2]])


def lag_concentrated_loglik(frame, w, rho, logdet=None):
    """Concentrated Spatial Lag log-likelihood at rho (scalar or sequence)"""
    lik = LagLikelihood(frame, w, logdet)
    if np.ndim(rho) == 0:
        return lik.concentrated(float(rho))
    return np.array([lik.concentrated(float(r)) for r in rho])


def error_concentrated_loglik(frame, w, lam, logdet=None):
    """Concentrated Spatial Error log-likelihood at lam (scalar or sequence)"""
    lik = ErrorLikelihood(frame, w, logdet)
    if np.ndim(lam) == 0:
        return lik.concentrated(float(lam))
    return np.array([lik.concentrated(float(v)) for v in lam])


def _check_weights(frame, w, label):
    if w.n != frame.n:
        raise DataError(f"weight matrix covers {w.n} zones but the model frame has {frame.n}")
    if tuple(w.zone_ids) != tuple(frame.zone_ids):
        raise DataError("weight matrix zone order does not match the model frame")
    warnings = list(w.warnings)
    if not w.standardized:
        message = f"{label} estimated with a binary (not row-standardized) weight matrix"
        logger.warning(f"⚠️ {message}")
        warnings.append(message)
    return warnings


def _search_parameter(likelihood, label):
    lo, hi = likelihood.interval()
    result = golden_section(likelihood.concentrated, lo, hi, RHO_TOL)
    if result.at_boundary(lo, hi, 10 * RHO_TOL):
        raise EstimationError(
            f"{label} likelihood has no interior maximum on ({lo:.6f}, {hi:.6f}); best value at {result.x:.6f}",
            trace=result.trace,
        )
    return result.x


def fit_spatial_lag(frame, w, logdet=None, rho=None):
    """
    Spatial Lag model by maximum likelihood.

    rho is profiled out by golden-section on the concentrated likelihood;
    passing rho fixes it instead (rho=0 reduces to OLS).
    """
    warnings = _check_weights(frame, w, "spatial lag model")
    names = (INTERCEPT,) + frame.columns
    check_rank(frame.design(), names)
    lik = LagLikelihood(frame, w, logdet)

    rho_hat = _search_parameter(lik, "spatial lag") if rho is None else float(rho)
    beta = lik.beta(rho_hat)
    resid = lik.residuals(rho_hat, beta)
    rss = float(resid @ resid)
    sig2 = rss / frame.n
    ll = lik.concentrated(rho_hat)

    theta = np.concatenate([[rho_hat], beta, [sig2]])
    se, converged = _inference(numerical_hessian(lik.score, theta), theta)
    p = _z_pvalues(beta, se[1:-1])
    n_params = beta.shape[0] + 2
    logger.info(f"✅ Spatial lag fitted: rho={rho_hat:.4f}, logL={ll:.3f}")
    return FitResult(
        model_kind="spatial_lag",
        columns=names,
        beta=beta,
        std_errors=se[1:-1],
        p_values=p,
        rho=rho_hat,
        rho_std_error=float(se[0]),
        rho_p_value=float(_z_pvalues(rho_hat, se[0])),
        sigma2=sig2,
        log_likelihood=ll,
        aic=2.0 * n_params - 2.0 * ll,
        adjusted_r2=_adjusted_r2(rss, frame.y, frame.p),
        residuals=resid,
        converged=converged,
        n_params=n_params,
        weights_standardized=w.standardized,
        warnings=tuple(warnings),
    )


def fit_spatial_error(frame, w, logdet=None, lam=None):
    """Spatial Error model by maximum likelihood; lam fixes the error parameter"""
    warnings = _check_weights(frame, w, "spatial error model")
    names = (INTERCEPT,) + frame.columns
    check_rank(frame.design(), names)
    lik = ErrorLikelihood(frame, w, logdet)

    lam_hat = _search_parameter(lik, "spatial error") if lam is None else float(lam)
    beta, filtered = lik.filtered_fit(lam_hat)
    rss_filtered = float(filtered @ filtered)
    sig2 = rss_filtered / frame.n
    ll = lik.concentrated(lam_hat)
    resid = frame.y - frame.design() @ beta

    theta = np.concatenate([[lam_hat], beta, [sig2]])
    se, converged = _inference(numerical_hessian(lik.score, theta), theta)
    p = _z_pvalues(beta, se[1:-1])
    n_params = beta.shape[0] + 2
    logger.info(f"✅ Spatial error fitted: lambda={lam_hat:.4f}, logL={ll:.3f}")
    return FitResult(
        model_kind="spatial_error",
        columns=names,
        beta=beta,
        std_errors=se[1:-1],
        p_values=p,
        rho=lam_hat,
        rho_std_error=float(se[0]),
        rho_p_value=float(_z_pvalues(lam_hat, se[0])),
        sigma2=sig2,
        log_likelihood=ll,
        aic=2.0 * n_params - 2.0 * ll,
        adjusted_r2=_adjusted_r2(float(resid @ resid), frame.y, frame.p),
        residuals=resid,
        converged=converged,
        n_params=n_params,
        weights_standardized=w.standardized,
        filtered_residuals=filtered,
        warnings=tuple(warnings),
    )


def distance_matrix(centroids_a, centroids_b=None):
    a = np.asarray(centroids_a, dtype=float)
    b = a if centroids_b is None else np.asarray(centroids_b, dtype=float)
    return haversine_matrix(a[:, 0][:, None], a[:, 1][:, None], b[:, 0][None, :], b[:, 1][None, :])


def _local_block(X, y, weights, rows, targets=None):
    """
    Weighted least squares at each focal row. Returns local betas,
    hat-matrix diagonal entries and the diag((X'WX)^-1 X'W^2 X (X'WX)^-1) factors.
    targets gives the design row used for the hat diagonal (the focal zone itself).
    """
    k = X.shape[1]
    betas = np.empty((len(rows), k))
    hat = np.empty(len(rows))
    var = np.empty((len(rows), k))
    for out, i in enumerate(rows):
        wi = weights[i]
        if np.count_nonzero(wi > 0) < k:
            raise EstimationError(
                f"local design at row {i} is singular (only {np.count_nonzero(wi > 0)} locations carry weight); use a larger bandwidth"
            )
        XtW = X.T * wi
        A = XtW @ X
        if np.linalg.matrix_rank(A) < k:
            raise EstimationError(f"local design at row {i} is singular; use a larger bandwidth")
        C = np.linalg.solve(A, XtW)
        betas[out] = C @ y
        if targets is not None:
            hat[out] = targets[i] @ C[:, i]
        var[out] = np.sum(C ** 2, axis=1)
    return betas, hat, var


def _local_regressions(X, y, weights, n_jobs=1):
    n = weights.shape[0]
    if n_jobs is None or n_jobs <= 0:
        n_jobs = os.cpu_count() or 1
    if n_jobs == 1 or n < 2 * n_jobs:
        return _local_block(X, y, weights, range(n), targets=X)
    chunks = np.array_split(np.arange(n), n_jobs)
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        parts = list(pool.map(lambda rows: _local_block(X, y, weights, rows, targets=X), chunks))
    return (
        np.vstack([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.vstack([p[2] for p in parts]),
    )


def gwr_aicc(rss, n, trace_s):
    if n - 2.0 - trace_s <= 0:
        return math.inf
    if rss <= 0:
        return -math.inf
    return n * math.log(rss / n) + n * LN2PI + n * (n + trace_s) / (n - 2.0 - trace_s)


def fit_gwr(frame, spec, n_jobs=1, distances=None):
    X = frame.design()
    names = (INTERCEPT,) + frame.columns
    D = distance_matrix(frame.centroids) if distances is None else distances
    weights = kernel_from_distances(D, spec)
    betas, hat, var = _local_regressions(X, frame.y, weights, n_jobs)

    n = frame.n
    fitted = np.sum(X * betas, axis=1)
    resid = frame.y - fitted
    rss = float(resid @ resid)
    trace_s = float(hat.sum())
    sigma2 = rss / (n - trace_s)
    ll = float(_gaussian_loglik(rss, n))
    return GwrResult(
        columns=names,
        local_beta=betas,
        local_std_errors=np.sqrt(sigma2 * var),
        kernel=spec,
        effective_parameters=trace_s,
        sigma2=sigma2,
        log_likelihood=ll,
        aic=gwr_aicc(rss, n, trace_s),
        aic_classic=-2.0 * ll + 2.0 * (trace_s + 1.0),
        adjusted_r2=_adjusted_r2(rss, frame.y, trace_s),
        residuals=resid,
        hat_diagonal=hat,
        zone_ids=frame.zone_ids,
    )


def gwr_hat_matrix(frame, spec):
    """Explicit n x n hat matrix, for small frames and cross-checks"""
    X = frame.design()
    weights = kernel_from_distances(distance_matrix(frame.centroids), spec)
    S = np.empty((frame.n, frame.n))
    for i in range(frame.n):
        XtW = X.T * weights[i]
        S[i] = X[i] @ np.linalg.solve(XtW @ X, XtW)
    return S


def predict_gwr(train, spec, x_new, centroids_new):
    """Local regression at new locations using only the training zones"""
    x_new = np.asarray(x_new, dtype=float)
    if x_new.ndim == 1:
        x_new = x_new.reshape(1, -1)
    if x_new.shape[1] != train.p:
        raise DataError(f"expected {train.p} predictor columns, got {x_new.shape[1]}")
    D = distance_matrix(centroids_new, train.centroids)
    weights = kernel_from_distances(D, spec)
    betas, _, _ = _local_block(train.design(), train.y, weights, range(x_new.shape[0]))
    design_new = np.column_stack([np.ones(x_new.shape[0]), x_new])
    return np.sum(design_new * betas, axis=1)


def select_bandwidth(frame, kind, adaptive, n_jobs=1):
    """Golden-section search for the bandwidth minimizing AICc"""
    if frame.n < 30:
        raise DataError(f"bandwidth selection needs at least 30 zones, got {frame.n}")
    D = distance_matrix(frame.centroids)
    X = frame.design()

    def aicc(bw):
        try:
            weights = kernel_from_distances(D, KernelSpec(kind, bw, adaptive))
            betas, hat, _ = _local_regressions(X, frame.y, weights, n_jobs)
        except (EstimationError, DataError):
            return math.inf
        resid = frame.y - np.sum(X * betas, axis=1)
        return gwr_aicc(float(resid @ resid), frame.n, float(hat.sum()))

    if adaptive:
        lower, upper = frame.p + 2, frame.n - 1
        result = golden_section(aicc, lower, upper, 1.0, maximize=False, integer=True)
    else:
        off = D[~np.eye(frame.n, dtype=bool)]
        lower, upper = float(off[off > 0].min()), float(off.max())
        result = golden_section(aicc, lower, upper, 1e-3 * (upper - lower), maximize=False)

    if not math.isfinite(result.value):
        raise EstimationError("AICc is undefined across the whole bandwidth range", trace=result.trace)
    logger.info(f"✅ Selected {'adaptive' if adaptive else 'fixed'} {kind} bandwidth {result.x:g} (AICc={result.value:.3f})")
    return KernelSpec(kind, result.x, adaptive)


def resolve_kernel(frame, kind="bisquare", adaptive=True, bandwidth=None, n_jobs=1):
    """Fixed kernel when a bandwidth is configured, AICc-selected otherwise"""
    if bandwidth is None:
        return select_bandwidth(frame, kind, adaptive, n_jobs)
    return KernelSpec(kind, bandwidth, adaptive)


def fit_model(kind, frame, w=None, kernel=None, logdet=None, n_jobs=1):
    """Dispatch on model kind; GWR takes a KernelSpec, the spatial models a WeightMatrix"""
    if kind == "ols":
        return fit_ols(frame)
    if kind == "spatial_lag":
        return fit_spatial_lag(frame, w, logdet=logdet)
    if kind == "spatial_error":
        return fit_spatial_error(frame, w, logdet=logdet)
    if kind == "gwr":
        if kernel is None:
            raise DataError("GWR needs a kernel specification")
        return fit_gwr(frame, kernel, n_jobs=n_jobs)
    raise DataError(f"unknown model kind '{kind}', expected one of {MODEL_KINDS}")


def predict(fit, x_new):
    """Trend-only prediction beta0 + x_new beta, the held-out rule for every model kind"""
    x_new = np.asarray(x_new, dtype=float)
    if x_new.ndim == 1:
        x_new = x_new.reshape(1, -1)
    if x_new.shape[1] != fit.beta.shape[0] - 1:
        raise DataError(f"expected {fit.beta.shape[0] - 1} predictor columns, got {x_new.shape[1]}")
    return fit.beta[0] + x_new @ fit.beta[1:]
