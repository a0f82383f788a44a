"""
Transforms Module
Box-Cox transformation of the target and z-score standardization of predictors
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from errors import DataError, EstimationError
from search import golden_section

logger = logging.getLogger(__name__)

LAMBDA_BOUNDS = (-2.0, 2.0)
LAMBDA_TOL = 1e-6


@dataclass(frozen=True)
class BoxCoxSpec:
    lam: float
    offset: float = 0.0

    def __post_init__(self):
        if self.offset < 0:
            raise DataError(f"Box-Cox offset must be nonnegative, got {self.offset}")

    def to_dict(self):
        return {"lambda": self.lam, "offset": self.offset}


@dataclass(frozen=True)
class StandardizationParams:
    mean: pd.Series
    std: pd.Series

    def to_dict(self):
        return {
            col: {"mean": float(self.mean[col]), "std": float(self.std[col])}
            for col in self.mean.index
        }


def _shifted(y, offset):
    shifted = np.asarray(y, dtype=float) + offset
    bad = np.flatnonzero(~(shifted > 0))
    if bad.size:
        i = int(bad[0])
        raise DataError(
            f"Box-Cox needs strictly positive values after the offset; index {i} gives {shifted[i]}"
        )
    return shifted


def boxcox(y, spec):
    shifted = _shifted(y, spec.offset)
    if spec.lam == 0:
        return np.log(shifted)
    return (np.power(shifted, spec.lam) - 1.0) / spec.lam


def inverse_boxcox(z, spec):
    z = np.asarray(z, dtype=float)
    if spec.lam == 0:
        return np.exp(z) - spec.offset
    return np.power(spec.lam * z + 1.0, 1.0 / spec.lam) - spec.offset


def boxcox_profile_loglik(lam, shifted):
    """Profile log-likelihood of lambda, Jacobian term included"""
    return float(stats.boxcox_llf(lam, shifted))


def boxcox_mle(y, offset=0.0, bounds=LAMBDA_BOUNDS, tol=LAMBDA_TOL):
    """Lambda maximizing the Box-Cox profile likelihood, by golden-section over bounds"""
    shifted = _shifted(y, offset)
    if shifted.size < 3:
        raise DataError(f"Box-Cox lambda estimation needs at least 3 values, got {shifted.size}")
    if np.ptp(shifted) == 0:
        raise EstimationError("Box-Cox likelihood is flat for a constant target")

    result = golden_section(lambda lam: boxcox_profile_loglik(lam, shifted), bounds[0], bounds[1], tol)
    return result.x


def lambda_warnings(lam, bounds=LAMBDA_BOUNDS, tol=LAMBDA_TOL):
    """Warn when the estimated lambda ends up on the edge of the search range"""
    if min(abs(lam - bounds[0]), abs(lam - bounds[1])) > 10 * tol:
        return []
    message = f"Box-Cox lambda {lam:.4f} sits on the search boundary {bounds}"
    logger.warning(f"⚠️ {message}")
    return [message]


def auto_offset(y):
    """1 when any value is zero (zero-ownership zones), otherwise 0"""
    return 1.0 if np.any(np.asarray(y, dtype=float) <= 0) else 0.0


def zscore(x):
    """Standardize every column with its mean and sample (n - 1) standard deviation"""
    frame = pd.DataFrame(x).astype(float)
    mean = frame.mean()
    std = frame.std(ddof=1)
    for col in frame.columns:
        if not std[col] > 0:
            raise DataError(f"column '{col}' is constant and cannot be standardized")
    standardized = (frame - mean) / std
    return standardized, StandardizationParams(mean=mean, std=std)


def unstandardize(z, params):
    frame = pd.DataFrame(z)
    return frame * params.std[frame.columns] + params.mean[frame.columns]
