"""
Spatial Modelling Pipeline
Runs fuse -> weights -> fit -> diagnose -> cv -> report and the radius / threshold sweeps
"""

import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime

import pandas as pd

import run_history
from data_io import (
    read_crosswalk,
    read_points,
    read_polygons,
    read_population,
    read_table,
    write_csv,
    write_json,
    write_text,
)
from diagnostics import kfold_cv, morans_i
from errors import ConfigError, DataError, StageError
from estimators import MODEL_KINDS, fit_model, log_det_system, resolve_kernel
from fusion import (
    DEFAULT_THRESHOLD,
    FrameInputs,
    aggregate_to_zcta,
    crosswalk_assign,
    radius_sweep,
    threshold_sensitivity,
)
from report import build_report, coefficients_table, render_text, to_json
from run_config import validate_config
from spatial_weights import build_queen_contiguity, row_standardize, weights_to_edge_list

logger = logging.getLogger(__name__)

STAGES = ("fuse", "weights", "fit", "diagnose", "cv", "report")
STALE_MARKER = "STALE"


@dataclass
class RunContext:
    """Per-invocation state: output files written so far and the history run id"""

    config: object
    run_id: str = ""
    written: list = field(default_factory=list)

    def __post_init__(self):
        os.makedirs(self.config.output_dir, exist_ok=True)
        if not self.run_id:
            self.run_id = f"{datetime.now():%Y%m%d%H%M%S}-{self.config.config_hash[:8]}"
        if self.config.history_db:
            run_history.init_db(self.config.history_db)

    def path(self, name):
        path = os.path.join(self.config.output_dir, name)
        self.written.append(path)
        return path

    def record(self, stage, status, message=""):
        if self.config.history_db:
            run_history.save_stage(
                self.run_id, stage, status, message, self.config.config_hash, db_file=self.config.history_db
            )

    def mark_stale(self, stage, cause):
        marker = os.path.join(self.config.output_dir, STALE_MARKER)
        lines = [f"stage '{stage}' failed: {cause}", "outputs written before the failure:"]
        lines.extend(f"  {p}" for p in self.written)
        write_text(marker, "\n".join(lines) + "\n")
        logger.error(f"❌ Outputs in {self.config.output_dir} flagged stale")

    def clear_stale(self):
        marker = os.path.join(self.config.output_dir, STALE_MARKER)
        if os.path.exists(marker):
            os.remove(marker)

    @contextmanager
    def stage(self, name):
        logger.info(f"▶️ Stage '{name}'")
        start = datetime.now()
        try:
            yield
        except StageError:
            raise
        except Exception as e:
            logger.error(f"❌ Stage '{name}' failed: {e}")
            self.record(name, "failed", e)
            self.mark_stale(name, e)
            raise StageError(name, e) from e
        self.record(name, "completed")
        logger.info(f"✅ Stage '{name}' completed in {(datetime.now() - start).total_seconds():.1f}s")


@dataclass
class FusedData:
    inputs: FrameInputs
    frame: object
    assembly: object
    boxcox: object
    standardization: object


def load_frame_inputs(config):
    """Read every table, aggregating tract/cbg tables to ZCTAs through the crosswalk"""
    polygons = tuple(read_polygons(config.polygons, config.polygon_id_property))
    tables, unmatched, warnings = [], set(), []

    assignment = None
    if config.needs_crosswalk:
        assignment, below = crosswalk_assign(read_crosswalk(config.crosswalk), config.crosswalk_threshold)
        unmatched.update(below)
        if below:
            warnings.append(f"{len(below)} tract(s) below the crosswalk threshold {config.crosswalk_threshold}")
    population = read_population(config.tract_population) if config.tract_population else None

    for spec in config.tables:
        table = read_table(spec.path, spec.level, spec.id_column, spec.population_column, spec.name)
        if spec.level != "zcta":
            weights = table.data[spec.population_column] if spec.population_column else population
            table = aggregate_to_zcta(table, assignment, weights)
            unmatched.update(table.unmatched)
            warnings.extend(table.warnings)
            if table.unmatched:
                warnings.append(f"{len(table.unmatched)} assigned tract(s) missing from table '{table.name}'")
        tables.append(table)

    inputs = FrameInputs(
        tables=tuple(tables),
        target_column=config.target,
        predictor_columns=tuple(config.predictors),
        polygons=polygons,
        station_column=config.station_column,
        boxcox_offset=config.boxcox_offset,
        boxcox_lambda=config.boxcox_lambda,
        threshold_used=config.crosswalk_threshold if config.needs_crosswalk else None,
        unmatched_tracts=tuple(sorted(unmatched)),
    )
    return inputs, warnings


def run_fuse_stage(ctx):
    inputs, warnings = load_frame_inputs(ctx.config)
    frame, assembly, spec, params = inputs.assemble()
    assembly.warnings = warnings + list(assembly.warnings)
    document = assembly.to_dict()
    document["boxcox"] = spec.to_dict()
    document["standardization"] = params.to_dict()
    write_json(ctx.path("assembly_report.json"), document)
    return FusedData(inputs, frame, assembly, spec, params)


def build_weights(polygons, standardize=True):
    w = build_queen_contiguity(polygons)
    return row_standardize(w) if standardize else w


def run_weights_stage(ctx, fused):
    by_id = {p.zone_id: p for p in fused.inputs.polygons}
    w = build_weights([by_id[z] for z in fused.frame.zone_ids], ctx.config.standardize_weights)
    weights_to_edge_list(w, ctx.path("weights.csv"))
    return w


def run_fit_stage(ctx, fused, w):
    """All four models; SLM and SEM share one log-determinant evaluator"""
    config, frame = ctx.config, fused.frame
    logdet = log_det_system(w)
    kernel = resolve_kernel(frame, config.gwr.kernel, config.gwr.adaptive, config.gwr.bandwidth, config.threads)
    fits = {}
    for kind in MODEL_KINDS:
        logger.info(f"🧠 Fitting {kind}...")
        fits[kind] = fit_model(kind, frame, w, kernel=kernel, logdet=logdet, n_jobs=config.threads)
    write_json(ctx.path("fits.json"), {k: f.to_dict() for k, f in fits.items()})

    local = pd.DataFrame(fits["gwr"].local_beta, columns=list(fits["gwr"].columns))
    local.insert(0, "zone_id", list(frame.zone_ids))
    write_csv(local, ctx.path("gwr_local_coefficients.csv"))
    return fits, kernel


def run_diagnose_stage(ctx, fits, w):
    config = ctx.config
    morans = {
        kind: morans_i(fit.residuals, w, config.permutations, config.permutation_seed)
        for kind, fit in fits.items()
    }
    write_json(ctx.path("moran.json"), {k: m.to_dict() for k, m in morans.items()})
    return morans


def run_cv_stage(ctx, fused, w, kernel):
    config = ctx.config
    results = {
        kind: kfold_cv(fused.frame, w, kind, config.cv_folds, config.cv_seed, kernel=kernel)
        for kind in MODEL_KINDS
    }
    write_json(ctx.path("cv.json"), {k: r.to_dict() for k, r in results.items()})
    return results


def run_report_stage(ctx, fused, fits, morans, cv, kernel, fmt="both"):
    report = build_report(
        fits,
        morans=morans,
        cv=cv,
        config=ctx.config,
        assembly=fused.assembly,
        boxcox=fused.boxcox,
        kernel=kernel,
    )
    if fmt in ("json", "both"):
        write_text(ctx.path("report.json"), to_json(report))
    if fmt in ("text", "both"):
        write_text(ctx.path("report.txt"), render_text(report))
    write_csv(coefficients_table(report), ctx.path("coefficients.csv"))
    return report


def run_until(config, last_stage="report", fmt="both"):
    """
    Run the model pipeline through last_stage and return what it produced.
    Any failure is raised as StageError naming the stage, with partial outputs flagged stale.
    """
    if last_stage not in STAGES:
        raise ConfigError(f"unknown stage '{last_stage}', expected one of {STAGES}")
    validate_config(config)
    ctx = RunContext(config)
    ctx.clear_stale()
    stop = STAGES.index(last_stage)
    produced = {}

    with ctx.stage("fuse"):
        fused = produced["fused"] = run_fuse_stage(ctx)
    if stop >= 1:
        with ctx.stage("weights"):
            w = produced["weights"] = run_weights_stage(ctx, fused)
    if stop >= 2:
        with ctx.stage("fit"):
            fits, kernel = run_fit_stage(ctx, fused, w)
            produced.update(fits=fits, kernel=kernel)
    if stop >= 3:
        with ctx.stage("diagnose"):
            morans = produced["morans"] = run_diagnose_stage(ctx, fits, w)
    if stop >= 4:
        with ctx.stage("cv"):
            cv = produced["cv"] = run_cv_stage(ctx, fused, w, kernel)
    if stop >= 5:
        with ctx.stage("report"):
            produced["report"] = run_report_stage(ctx, fused, fits, morans, cv, kernel, fmt)
    produced["written"] = list(ctx.written)
    return produced


def run_pipeline(config, fmt="both"):
    """Full fuse -> report run; returns the ComparisonReport"""
    logger.info("=" * 60)
    logger.info("🚀 Starting spatial modelling pipeline")
    report = run_until(config, "report", fmt)["report"]
    logger.info("✅ Pipeline completed")
    logger.info("=" * 60)
    return report


def run_sweep(config):
    """Radius sweep of the station-count predictor; writes sweep_radius.csv and a JSON summary"""
    validate_config(config, need_stations=True)
    ctx = RunContext(config)
    ctx.clear_stale()
    with ctx.stage("sweep-radius"):
        inputs, _ = load_frame_inputs(config)
        stations = read_points(config.stations)
        w = build_weights(inputs.polygons, config.standardize_weights)
        table, best = radius_sweep(
            inputs,
            stations,
            config.radii,
            config.sweep_models,
            w,
            gwr_kind=config.gwr.kernel,
            gwr_adaptive=config.gwr.adaptive,
            gwr_bandwidth=config.gwr.bandwidth,
            n_jobs=config.threads,
        )
        write_csv(table, ctx.path("sweep_radius.csv"))
        write_json(ctx.path("sweep_radius.json"), {
            "radii": list(config.radii),
            "models": list(config.sweep_models),
            "best_radius": best,
            "aic_kind": {m: ("AICc" if m == "gwr" else "AIC") for m in config.sweep_models},
            "config_hash": config.config_hash,
        })
    for model, radius in best.items():
        if radius is None:
            logger.warning(f"⚠️ No radius gave a usable station column for {model}")
        else:
            logger.info(f"📊 Best radius for {model}: {radius:g} miles")
    return table, best


def run_threshold_sweep(config):
    """Matched ZCTA counts across crosswalk thresholds; writes sweep_threshold.csv and a JSON summary"""
    validate_config(config)
    if config.crosswalk is None:
        raise ConfigError("threshold sweep needs a 'crosswalk' file")
    ctx = RunContext(config)
    ctx.clear_stale()
    with ctx.stage("sweep-threshold"):
        rows = read_crosswalk(config.crosswalk)
        if not rows:
            raise DataError("crosswalk is empty; nothing to match")
        table = threshold_sensitivity(rows, config.thresholds)
        write_csv(table, ctx.path("sweep_threshold.csv"))
        at_default = table.loc[(table["threshold"] - DEFAULT_THRESHOLD).abs() < 1e-12, "matched_count"]
        write_json(ctx.path("sweep_threshold.json"), {
            "thresholds": list(table["threshold"]),
            "matched_counts": [int(c) for c in table["matched_count"]],
            "default_threshold": DEFAULT_THRESHOLD,
            "matched_at_default": int(at_default.iloc[0]) if len(at_default) else None,
            "configured_threshold": config.crosswalk_threshold,
        })
    return table
