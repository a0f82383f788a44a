"""
Report Module
Four-model comparison report: JSON document and fixed-width text table with significance stars
"""

import json
import logging
import math
from dataclasses import dataclass, field

import pandas as pd

from data_io import sanitize

logger = logging.getLogger(__name__)

MODEL_LABELS = {
    "ols": "OLS",
    "spatial_lag": "Spatial Lag",
    "spatial_error": "Spatial Error",
    "gwr": "GWR",
}
SPATIAL_PARAMETER = {"spatial_lag": "rho", "spatial_error": "lambda"}
STAR_LEVELS = ((0.001, "***"), (0.01, "**"), (0.05, "*"))
LABEL_WIDTH = 26
CELL_WIDTH = 18
NOT_AVAILABLE = "n/a"

DECISIONS = {
    "spatial_inference": "asymptotic z from the numerical Hessian of the full log-likelihood",
    "ols_inference": "t with n - k degrees of freedom",
    "moran_variance": "randomization assumption",
    "moran_stars": "analytic two-sided p-value",
    "cv_prediction_rule": "trend only: beta0 + X beta (GWR: local trend at the held-out centroid)",
    "mae_scale": "Box-Cox transformed target",
    "gwr_aic": "AICc",
    "log_determinant": "eigenvalues of the symmetrized similar matrix",
}


def stars(p):
    if p is None or not math.isfinite(p):
        return ""
    for level, mark in STAR_LEVELS:
        if p <= level:
            return mark
    return ""


def _finite(value):
    return value is not None and isinstance(value, (int, float)) and math.isfinite(value)


def dedupe(messages):
    """Unique messages in first-seen order"""
    seen, out = set(), []
    for m in messages:
        if m not in seen:
            seen.add(m)
            out.append(m)
    return out


@dataclass
class ComparisonReport:
    variables: list
    models: list
    coefficients: dict
    spatial_parameters: dict
    moran: dict
    fit_statistics: dict
    cv: dict
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "variables": list(self.variables),
            "models": list(self.models),
            "coefficients": self.coefficients,
            "spatial_parameters": self.spatial_parameters,
            "moran": self.moran,
            "fit_statistics": self.fit_statistics,
            "cv": self.cv,
            "metadata": self.metadata,
        }


def _coefficient_cells(fit):
    if fit.model_kind == "gwr":
        return [
            {"variable": v, "estimate": float(b), "std_error": float(s), "p_value": None, "kind": "mean_local"}
            for v, b, s in zip(fit.columns, fit.mean_beta, fit.mean_std_errors)
        ]
    return [
        {"variable": v, "estimate": float(b), "std_error": float(s), "p_value": float(p), "kind": "global"}
        for v, b, s, p in zip(fit.columns, fit.beta, fit.std_errors, fit.p_values)
    ]


def build_report(fits, morans=None, cv=None, config=None, assembly=None, boxcox=None, kernel=None, warnings=()):
    """
    Gather fitted models and diagnostics into one report.

    fits maps model kind to FitResult or GwrResult; every fit must share the
    same variable ordering.
    """
    morans = morans or {}
    cv = cv or {}
    models = [k for k in MODEL_LABELS if k in fits]
    variables = None
    for kind in models:
        cols = list(fits[kind].columns)
        if variables is None:
            variables = cols
        elif cols != variables:
            raise ValueError(f"{kind} variables {cols} differ from {variables}")

    collected = list(warnings)
    if assembly is not None:
        collected.extend(assembly.warnings)
    for kind in models:
        collected.extend(getattr(fits[kind], "warnings", ()))

    metadata = {
        "decisions": dict(DECISIONS),
        "warnings": dedupe(collected),
    }
    if config is not None:
        metadata["config_hash"] = config.config_hash
        metadata["config"] = {k: v for k, v in config.to_dict().items() if k not in ("output_dir", "history_db", "threads")}
    if assembly is not None:
        metadata["assembly"] = assembly.to_dict()
    if boxcox is not None:
        metadata["boxcox"] = boxcox.to_dict()
    if kernel is not None:
        metadata["gwr_kernel"] = kernel.to_dict()

    fit_statistics = {}
    for kind in models:
        fit = fits[kind]
        fit_statistics[kind] = {
            "adjusted_r2": fit.adjusted_r2,
            "aic": fit.aic,
            "aic_kind": "AICc" if kind == "gwr" else "AIC",
            "log_likelihood": fit.log_likelihood,
            "n": fit.n,
        }
        if kind == "gwr":
            fit_statistics[kind]["effective_parameters"] = fit.effective_parameters
            fit_statistics[kind]["aic_classic"] = fit.aic_classic
        else:
            fit_statistics[kind]["converged"] = fit.converged

    return ComparisonReport(
        variables=variables or [],
        models=models,
        coefficients={k: _coefficient_cells(fits[k]) for k in models},
        spatial_parameters={
            k: {
                "name": SPATIAL_PARAMETER[k],
                "estimate": fits[k].rho,
                "std_error": fits[k].rho_std_error,
                "p_value": fits[k].rho_p_value,
            }
            for k in models if k in SPATIAL_PARAMETER
        },
        moran={k: morans[k].to_dict() for k in models if k in morans},
        fit_statistics=fit_statistics,
        cv={k: cv[k].to_dict() for k in models if k in cv},
        metadata=metadata,
    )


def to_json(report):
    """Canonical JSON text: sorted keys, non-finite values as null, no timestamps"""
    return json.dumps(sanitize(report.to_dict()), indent=2, sort_keys=True, allow_nan=False, ensure_ascii=False) + "\n"


def coefficients_table(report):
    rows = []
    for kind in report.models:
        for cell in report.coefficients[kind]:
            rows.append({
                "variable": cell["variable"],
                "model": kind,
                "coefficient": cell["estimate"],
                "std_error": cell["std_error"],
                "p_value": cell["p_value"],
            })
    return pd.DataFrame(rows, columns=["variable", "model", "coefficient", "std_error", "p_value"])


def _num(value, fmt="{:.2f}"):
    return fmt.format(value) if _finite(value) else NOT_AVAILABLE


def _moran_cell(m):
    if m is None or not _finite(m.get("statistic")):
        return NOT_AVAILABLE
    mark = stars(m.get("p_analytic"))
    if mark:
        return f"{m['statistic']:.2f}{mark}"
    p = m.get("p_analytic")
    return f"{m['statistic']:.4f} (p={p:.3f})" if _finite(p) else f"{m['statistic']:.4f}"


def _line(label, cells):
    return label.ljust(LABEL_WIDTH) + "".join(c.rjust(CELL_WIDTH) for c in cells)


def render_text(report):
    """Fixed-width comparison table: coefficients to 2 decimals, standard errors in parentheses"""
    models = report.models
    width = LABEL_WIDTH + CELL_WIDTH * len(models)
    out = ["Modeling coefficients, standard errors and summary", "=" * width]
    out.append(_line("Variable", [MODEL_LABELS[k] for k in models]))
    out.append("-" * width)

    for i, variable in enumerate(report.variables):
        coef_cells, se_cells = [], []
        for kind in models:
            cell = report.coefficients[kind][i]
            coef_cells.append(_num(cell["estimate"]) + stars(cell["p_value"]) if _finite(cell["estimate"]) else NOT_AVAILABLE)
            se_cells.append(f"({_num(cell['std_error'])})")
        out.append(_line(variable, coef_cells))
        out.append(_line("", se_cells))

    if report.spatial_parameters:
        coef_cells, se_cells = [], []
        for kind in models:
            sp = report.spatial_parameters.get(kind)
            if sp is None:
                coef_cells.append("")
                se_cells.append("")
                continue
            value = _num(sp["estimate"])
            coef_cells.append(f"{sp['name']} {value}{stars(sp['p_value']) if _finite(sp['estimate']) else ''}")
            se_cells.append(f"({_num(sp['std_error'])})")
        out.append(_line("Spatial parameter", coef_cells))
        out.append(_line("", se_cells))

    out.append("-" * width)
    out.append(_line("Moran's I (residuals)", [_moran_cell(report.moran.get(k)) for k in models]))
    stats = report.fit_statistics
    out.append(_line("Adjusted R2", [_num(stats[k]["adjusted_r2"], "{:.3f}") for k in models]))
    out.append(_line("AIC", [_num(stats[k]["aic"]) + (" (AICc)" if k == "gwr" else "") for k in models]))
    out.append(_line("Log-likelihood", [_num(stats[k]["log_likelihood"]) for k in models]))
    folds = next((c["k"] for c in report.cv.values()), None)
    cv_label = f"({folds}-fold CV)" if folds else "(CV)"
    out.append(_line(f"Training MAE {cv_label}", [_num(report.cv.get(k, {}).get("train_mae"), "{:.3f}") for k in models]))
    out.append(_line(f"Testing MAE {cv_label}", [_num(report.cv.get(k, {}).get("test_mae"), "{:.3f}") for k in models]))
    out.append("=" * width)

    out.append("* p <= 0.05  ** p <= 0.01  *** p <= 0.001")
    out.append("Standard errors in parentheses; Moran's I p-values under the randomization assumption.")
    if "gwr" in models:
        out.append("GWR: mean of local coefficients and standard errors; no global p-value. GWR AIC is AICc.")
    out.append("Held-out predictions use the trend beta0 + X beta only; MAE on the Box-Cox scale.")

    summary = report.metadata.get("assembly", {}).get("predictor_summary")
    if summary:
        out.append("")
        out.extend(render_summary(summary))

    warnings = report.metadata.get("warnings", [])
    if warnings:
        out.append("")
        out.append("Warnings:")
        out.extend(f"  - {w}" for w in warnings)
    return "\n".join(out) + "\n"


def render_summary(summary):
    """Predictor summary lines: mean, standard deviation and VIF per variable"""
    lines = [_line("Variable summary", ["Mean", "Std. dev.", "VIF"]), "-" * (LABEL_WIDTH + 3 * CELL_WIDTH)]
    for variable, row in summary.items():
        vif = row.get("vif")
        vif_cell = "inf" if vif is not None and math.isinf(vif) else _num(vif)
        lines.append(_line(variable, [_num(row.get("mean")), _num(row.get("std")), vif_cell]))
    return lines
