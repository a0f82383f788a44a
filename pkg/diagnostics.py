"""
Diagnostics Module
Moran's I residual diagnostics, VIF screening, k-fold cross-validated MAE and the predictor summary table
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.metrics import mean_absolute_error
from sklearn.model_selection import KFold

from errors import DataError, EstimationError
from estimators import fit_gwr, fit_ols, fit_spatial_error, fit_spatial_lag, predict, predict_gwr
from spatial_weights import KernelSpec, subset_weights

logger = logging.getLogger(__name__)

PERMUTATION_CHUNK = 500


@dataclass(frozen=True)
class MoranResult:
    statistic: float
    expectation: float
    variance: float
    z_score: float
    p_analytic: float
    p_permutation: float = None
    permutations: int = 0
    seed: int = None
    weights_standardized: bool = None

    def to_dict(self):
        return {
            "statistic": self.statistic,
            "expectation": self.expectation,
            "variance": self.variance,
            "variance_assumption": "randomization",
            "z_score": self.z_score,
            "p_analytic": self.p_analytic,
            "p_permutation": self.p_permutation,
            "permutations": self.permutations,
            "seed": self.seed,
            "weights_standardized": self.weights_standardized,
        }


@dataclass(frozen=True)
class CvResult:
    model_kind: str
    k: int
    train_mae: float
    test_mae: float
    per_fold: tuple
    fold_sizes: tuple
    seed: int

    def to_dict(self):
        return {
            "model_kind": self.model_kind,
            "k": self.k,
            "train_mae": self.train_mae,
            "test_mae": self.test_mae,
            "per_fold": [list(f) for f in self.per_fold],
            "fold_sizes": list(self.fold_sizes),
            "seed": self.seed,
            "prediction_rule": "trend-only beta0 + X beta (local trend for gwr)",
            "scale": "box-cox transformed target",
        }


def _moran_value(z, matrix, s0, zz):
    return (z.shape[-1] / s0) * np.sum(z * (matrix @ z.T).T, axis=-1) / zz


def morans_i(values, w, permutations=0, seed=None):
    """Global Moran's I with randomization-assumption moments and an optional permutation test"""
    x = np.asarray(values, dtype=float).ravel()
    n = x.shape[0]
    if n != w.n:
        raise DataError(f"{n} values for a weight matrix over {w.n} zones")
    if n < 4:
        raise DataError(f"Moran's I needs at least 4 values, got {n}")
    if not np.all(np.isfinite(x)):
        raise DataError("Moran's I values contain missing or non-finite entries")
    z = x - x.mean()
    zz = float(z @ z)
    if np.ptp(x) == 0 or zz == 0:
        raise EstimationError("Moran's I is undefined for a constant vector")

    W = w.matrix
    s0 = float(W.sum())
    if s0 == 0:
        raise EstimationError("Moran's I is undefined for a weight matrix without links")

    statistic = float((n / s0) * (z @ (W @ z)) / zz)
    expectation = -1.0 / (n - 1)

    s1 = 0.5 * float((W + W.T).power(2).sum())
    s2 = float(np.sum((np.asarray(W.sum(axis=1)).ravel() + np.asarray(W.sum(axis=0)).ravel()) ** 2))
    b2 = n * float(np.sum(z ** 4)) / zz ** 2
    numerator = (
        n * ((n * n - 3 * n + 3) * s1 - n * s2 + 3 * s0 ** 2)
        - b2 * ((n * n - n) * s1 - 2 * n * s2 + 6 * s0 ** 2)
    )
    second_moment = numerator / ((n - 1) * (n - 2) * (n - 3) * s0 ** 2)
    variance = second_moment - expectation ** 2
    z_score = (statistic - expectation) / math.sqrt(variance) if variance > 0 else math.nan
    p_analytic = float(2.0 * stats.norm.sf(abs(z_score))) if math.isfinite(z_score) else math.nan

    p_permutation = None
    if permutations:
        rng = np.random.default_rng(seed)
        observed = abs(statistic - expectation)
        extreme = 0
        remaining = permutations
        while remaining:
            size = min(remaining, PERMUTATION_CHUNK)
            shuffled = np.array([rng.permutation(z) for _ in range(size)])
            simulated = _moran_value(shuffled, W, s0, zz)
            extreme += int(np.count_nonzero(np.abs(simulated - expectation) >= observed))
            remaining -= size
        p_permutation = (1 + extreme) / (1 + permutations)

    return MoranResult(
        statistic=statistic,
        expectation=expectation,
        variance=float(variance),
        z_score=float(z_score),
        p_analytic=p_analytic,
        p_permutation=p_permutation,
        permutations=int(permutations),
        seed=seed,
        weights_standardized=w.standardized,
    )


def vif(x):
    """Variance inflation factor per column, inf under perfect collinearity"""
    frame = pd.DataFrame(x).astype(float)
    n, p = frame.shape
    if n <= p + 1:
        raise DataError(f"VIF needs more than {p + 1} rows, got {n}")
    for col in frame.columns:
        if frame[col].nunique() < 2:
            raise DataError(f"column '{col}' is constant; VIF undefined")

    values = frame.to_numpy()
    out = {}
    for j, col in enumerate(frame.columns):
        target = values[:, j]
        others = np.column_stack([np.ones(n), np.delete(values, j, axis=1)])
        beta, *_ = np.linalg.lstsq(others, target, rcond=None)
        rss = float(np.sum((target - others @ beta) ** 2))
        tss = float(np.sum((target - target.mean()) ** 2))
        out[col] = math.inf if rss <= 1e-10 * tss else tss / rss

    result = pd.Series(out, name="vif")
    high = result[result > 10]
    if len(high):
        logger.warning(f"⚠️ VIF above 10 (multicollinearity): {', '.join(map(str, high.index))}")
    return result


def describe_predictors(raw_predictors, target=None):
    """Mean, sample standard deviation and VIF per predictor; the target row carries no VIF"""
    raw = pd.DataFrame(raw_predictors).astype(float)
    table = pd.DataFrame({
        "mean": raw.mean(),
        "std": raw.std(ddof=1),
        "vif": vif(raw),
    })
    if target is not None:
        target = pd.Series(target, dtype=float)
        name = target.name if target.name is not None else "target"
        table.loc[name] = [target.mean(), target.std(ddof=1), np.nan]
    table.index.name = "variable"
    return table


def cv_folds(n, k, seed):
    """Seeded shuffled partition of range(n) into k folds of near-equal size"""
    splitter = KFold(n_splits=k, shuffle=True, random_state=seed)
    return [(np.sort(train), np.sort(test)) for train, test in splitter.split(np.arange(n))]


def _n_params(frame, model_kind):
    return frame.p + 1 + (1 if model_kind in ("spatial_lag", "spatial_error") else 0)


def _fold_fit(model_kind, train, test, w, train_idx, kernel):
    if model_kind == "ols":
        fit = fit_ols(train)
        return fit.residuals, predict(fit, test.X)
    if model_kind == "spatial_lag":
        fit = fit_spatial_lag(train, subset_weights(w, train_idx))
        return fit.residuals, predict(fit, test.X)
    if model_kind == "spatial_error":
        fit = fit_spatial_error(train, subset_weights(w, train_idx))
        return fit.residuals, predict(fit, test.X)
    if model_kind == "gwr":
        if kernel is None:
            raise DataError("GWR cross-validation needs a kernel specification")
        if kernel.adaptive and kernel.bandwidth > train.n - 1:
            kernel = KernelSpec(kernel.kind, train.n - 1, True)
        fit = fit_gwr(train, kernel)
        return fit.residuals, predict_gwr(train, kernel, test.X, test.centroids)
    raise DataError(f"unknown model kind '{model_kind}'")


def kfold_cv(frame, w, model_kind, k=5, seed=42, kernel=None):
    """
    k-fold cross-validated MAE on the transformed target.

    Spatial models refit on the training zones with W restricted (and
    re-standardized) to them. Held-out zones are predicted by the trend
    beta0 + X beta only; GWR uses its local trend at the held-out centroid.
    """
    if k < 2:
        raise DataError(f"k must be at least 2, got {k}")
    if frame.n < 2 * k:
        raise DataError(f"{frame.n} zones is too few for {k} folds (need at least {2 * k})")
    if model_kind != "ols" and w is not None and w.n != frame.n:
        raise DataError(f"weight matrix covers {w.n} zones but the model frame has {frame.n}")

    folds = cv_folds(frame.n, k, seed)
    smallest_train = min(len(train) for train, _ in folds)
    needed = _n_params(frame, model_kind)
    if smallest_train < needed:
        raise DataError(f"training fold of {smallest_train} rows is smaller than {needed} parameters; use a smaller k")

    logger.info(f"📊 {k}-fold CV for {model_kind} (seed {seed})")
    per_fold = []
    for train_idx, test_idx in folds:
        train, test = frame.subset(train_idx), frame.subset(test_idx)
        train_resid, test_pred = _fold_fit(model_kind, train, test, w, train_idx, kernel)
        train_mae = mean_absolute_error(train.y, train.y - train_resid)
        per_fold.append((float(train_mae), float(mean_absolute_error(test.y, test_pred))))

    return CvResult(
        model_kind=model_kind,
        k=k,
        train_mae=float(np.mean([f[0] for f in per_fold])),
        test_mae=float(np.mean([f[1] for f in per_fold])),
        per_fold=tuple(per_fold),
        fold_sizes=tuple(len(test) for _, test in folds),
        seed=seed,
    )
