"""
Fusion Module
Tract-to-ZCTA crosswalk assignment, population-weighted aggregation, table joins and model-frame assembly
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from diagnostics import describe_predictors
from errors import DataError
from estimators import ModelFrame, fit_model, log_det_system, resolve_kernel
from spatial_weights import (
    align_weights,
    build_queen_contiguity,
    count_within_radius,
    points_to_array,
    polygon_centroid,
)
from transforms import BoxCoxSpec, auto_offset, boxcox, boxcox_mle, lambda_warnings, zscore

logger = logging.getLogger(__name__)

GEOGRAPHY_LEVELS = ("zcta", "tract", "cbg")
DEFAULT_THRESHOLD = 0.2
SHARE_SLACK = 1e-6


@dataclass(frozen=True)
class CrosswalkRow:
    tract_id: str
    zcta_id: str
    population_share: float

    def __post_init__(self):
        share = float(self.population_share)
        if not (math.isfinite(share) and 0.0 <= share <= 1.0):
            raise DataError(f"population share for tract '{self.tract_id}' must lie in [0, 1], got {self.population_share}")
        object.__setattr__(self, "tract_id", str(self.tract_id))
        object.__setattr__(self, "zcta_id", str(self.zcta_id))
        object.__setattr__(self, "population_share", share)


@dataclass(frozen=True)
class GeoTable:
    """Numeric columns keyed by geographic id; population_column, when set, is not a value column"""

    level: str
    data: pd.DataFrame
    population_column: str = None
    name: str = ""
    unmatched: tuple = ()
    warnings: tuple = ()

    def __post_init__(self):
        if self.level not in GEOGRAPHY_LEVELS:
            raise DataError(f"unknown geography level '{self.level}', expected one of {GEOGRAPHY_LEVELS}")
        data = self.data.copy()
        data.index = data.index.map(str)
        duplicated = data.index[data.index.duplicated()]
        if len(duplicated):
            raise DataError(f"table '{self.name}' has duplicate id '{duplicated[0]}'")
        if self.population_column is not None and self.population_column not in data.columns:
            raise DataError(f"table '{self.name}' has no population column '{self.population_column}'")
        object.__setattr__(self, "data", data)

    @property
    def value_columns(self):
        return [c for c in self.data.columns if c != self.population_column]


@dataclass
class AssemblyReport:
    rows_in: int
    rows_dropped_missing: int
    rows_out: int
    unmatched_tracts: list = field(default_factory=list)
    island_zones: list = field(default_factory=list)
    threshold_used: float = None
    predictor_summary: pd.DataFrame = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.rows_out != self.rows_in - self.rows_dropped_missing:
            raise DataError("assembly counts are inconsistent: rows_out must equal rows_in - rows_dropped_missing")

    def to_dict(self):
        summary = None
        if self.predictor_summary is not None:
            summary = {
                str(var): {k: (None if pd.isna(v) or not np.isfinite(v) else float(v)) for k, v in row.items()}
                for var, row in self.predictor_summary.iterrows()
            }
        return {
            "rows_in": self.rows_in,
            "rows_dropped_missing": self.rows_dropped_missing,
            "rows_out": self.rows_out,
            "unmatched_tracts": list(self.unmatched_tracts),
            "island_zones": list(self.island_zones),
            "threshold_used": self.threshold_used,
            "predictor_summary": summary,
            "warnings": list(self.warnings),
        }


def _as_rows(rows):
    out = []
    for r in rows:
        out.append(r if isinstance(r, CrosswalkRow) else CrosswalkRow(*r))
    return out


def _best_shares(rows):
    """(best zcta, best share) per tract; ties go to the smallest zcta id"""
    by_tract = defaultdict(dict)
    for r in _as_rows(rows):
        if r.zcta_id in by_tract[r.tract_id]:
            raise DataError(f"crosswalk lists tract '{r.tract_id}' / zcta '{r.zcta_id}' more than once")
        by_tract[r.tract_id][r.zcta_id] = r.population_share

    best = {}
    for tract, shares in by_tract.items():
        total = sum(shares.values())
        if total > 1.0 + SHARE_SLACK:
            raise DataError(f"population shares for tract '{tract}' sum to {total:.6f} (> 1)")
        zcta = min(shares, key=lambda z: (-shares[z], z))
        best[tract] = (zcta, shares[zcta])
    return best


def crosswalk_assign(rows, threshold=DEFAULT_THRESHOLD):
    """
    Assign each tract to the ZCTA holding the largest share of its population.

    Returns (assignment, unmatched): tract -> zcta for tracts whose best share
    reaches threshold, and the sorted ids of the tracts that do not.
    """
    if not 0.0 <= threshold <= 1.0:
        raise DataError(f"crosswalk threshold must lie in [0, 1], got {threshold}")
    assignment, unmatched = {}, []
    for tract, (zcta, share) in sorted(_best_shares(rows).items()):
        if share >= threshold:
            assignment[tract] = zcta
        else:
            unmatched.append(tract)
    if unmatched:
        logger.warning(f"⚠️ {len(unmatched)} tract(s) below the {threshold:.0%} share threshold left unmatched")
    logger.info(f"✅ Crosswalk assigned {len(assignment)} tracts to {len(set(assignment.values()))} ZCTAs")
    return assignment, unmatched


def threshold_sensitivity(rows, thresholds):
    """Distinct matched ZCTAs at each share threshold"""
    thresholds = [float(t) for t in thresholds]
    if not thresholds:
        raise DataError("threshold list is empty")
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise DataError("thresholds must be sorted ascending")
    if any(not 0.0 <= t <= 1.0 for t in thresholds):
        raise DataError("thresholds must lie in [0, 1]")
    best = _best_shares(rows)
    if not best:
        raise DataError("crosswalk is empty; nothing to match")

    zctas = np.array([z for z, _ in best.values()])
    shares = np.array([s for _, s in best.values()])
    counts = [len(np.unique(zctas[shares >= t])) for t in thresholds]
    return pd.DataFrame({"threshold": thresholds, "matched_count": counts})


def aggregate_to_zcta(table, assignment, weights):
    """Population-weighted mean of every value column over the tracts assigned to each ZCTA"""
    if table.level == "zcta":
        raise DataError(f"table '{table.name}' is already at zcta level")
    weights = pd.Series(weights, dtype=float)
    weights.index = weights.index.map(str)
    missing = sorted(t for t in assignment if t not in weights.index)
    if missing:
        raise DataError(f"{len(missing)} assigned tract(s) have no population weight, e.g. '{missing[0]}'")
    if (weights.loc[list(assignment)] < 0).any():
        raise DataError("tract populations must be nonnegative")

    present = [t for t in sorted(assignment) if t in table.data.index]
    unmatched = sorted(t for t in assignment if t not in table.data.index)
    columns = table.value_columns

    work = table.data.loc[present, columns].astype(float)
    work["_zcta"] = [assignment[t] for t in present]
    work["_pop"] = weights.loc[present].to_numpy()

    out, warnings = {}, []
    for zcta, group in work.groupby("_zcta", sort=True):
        row = {}
        for col in columns:
            ok = group[col].notna()
            if not ok.any():
                row[col] = np.nan
                continue
            pop = group.loc[ok, "_pop"].to_numpy()
            vals = group.loc[ok, col].to_numpy()
            if pop.sum() > 0:
                row[col] = float(np.dot(pop, vals) / pop.sum())
            else:
                row[col] = float(vals.mean())
                message = f"zero total population for zcta '{zcta}'; '{col}' uses an unweighted mean"
                if message not in warnings:
                    logger.warning(f"⚠️ {message}")
                    warnings.append(message)
        out[zcta] = row

    data = pd.DataFrame.from_dict(out, orient="index", columns=columns)
    data.index.name = "zcta_id"
    if unmatched:
        logger.warning(f"⚠️ {len(unmatched)} assigned tract(s) missing from table '{table.name}'")
    return GeoTable(level="zcta", data=data, name=table.name, unmatched=tuple(unmatched), warnings=tuple(warnings))


def _column_owners(tables, target_column, predictor_columns):
    holders = [t for t in tables if target_column in t.value_columns]
    if not holders:
        raise DataError(f"target column '{target_column}' is not in any table")
    if len(holders) > 1:
        raise DataError(f"target column '{target_column}' appears in {len(holders)} tables")
    owners = {target_column: holders[0]}
    for col in predictor_columns:
        if col == target_column:
            raise DataError(f"'{col}' cannot be both target and predictor")
        provider = next((t for t in tables if col in t.value_columns), None)
        if provider is None:
            raise DataError(f"predictor column '{col}' is not in any table")
        owners[col] = provider
    return owners


def assemble_frame(
    tables,
    target_column,
    predictor_columns,
    polygons,
    boxcox_offset=1.0,
    boxcox_lambda=None,
    threshold_used=DEFAULT_THRESHOLD,
    unmatched_tracts=(),
):
    """
    Join zcta-level tables into a model frame.

    Inner join on zcta id, listwise deletion, Box-Cox target (lambda by
    profile likelihood unless fixed; offset None picks one automatically),
    z-scored predictors and polygon centroids. Rows come out sorted by id.
    """
    tables = list(tables)
    predictor_columns = list(predictor_columns)
    for t in tables:
        if t.level != "zcta":
            raise DataError(f"table '{t.name}' is at {t.level} level; aggregate it to zcta first")
    owners = _column_owners(tables, target_column, predictor_columns)

    joined = None
    for t in tables:
        cols = [c for c, owner in owners.items() if owner is t]
        part = t.data[cols].astype(float)
        joined = part if joined is None else joined.join(part, how="inner")
    joined = joined.sort_index()
    rows_in = len(joined)

    complete = joined.dropna(subset=[target_column] + predictor_columns)
    dropped = rows_in - len(complete)
    if complete.empty:
        raise DataError("no rows left after listwise deletion of missing values")
    if dropped:
        logger.info(f"📊 Listwise deletion dropped {dropped} of {rows_in} zones")

    by_id = {p.zone_id: p for p in polygons}
    no_polygon = [z for z in complete.index if z not in by_id]
    if no_polygon:
        raise DataError(f"{len(no_polygon)} zone(s) have no polygon, e.g. '{no_polygon[0]}'")

    warnings = []
    y_raw = complete[target_column]
    offset = auto_offset(y_raw) if boxcox_offset is None else float(boxcox_offset)
    if boxcox_lambda is None:
        lam = boxcox_mle(y_raw.to_numpy(), offset)
        warnings.extend(lambda_warnings(lam))
    else:
        lam = float(boxcox_lambda)
    spec = BoxCoxSpec(lam, offset)
    y = boxcox(y_raw.to_numpy(), spec)

    raw_x = complete[predictor_columns]
    standardized, params = zscore(raw_x)

    zone_polygons = [by_id[z] for z in complete.index]
    centroids = points_to_array([polygon_centroid(p) for p in zone_polygons])
    contiguity = build_queen_contiguity(zone_polygons)
    warnings.extend(contiguity.warnings)

    frame = ModelFrame(
        zone_ids=tuple(complete.index),
        y=y,
        X=standardized.to_numpy(),
        columns=tuple(predictor_columns),
        centroids=centroids,
    )
    report = AssemblyReport(
        rows_in=rows_in,
        rows_dropped_missing=dropped,
        rows_out=len(complete),
        unmatched_tracts=sorted(unmatched_tracts),
        island_zones=contiguity.islands,
        threshold_used=threshold_used,
        predictor_summary=describe_predictors(raw_x, y_raw),
        warnings=warnings,
    )
    logger.info(f"✅ Model frame assembled: {frame.n} zones x {frame.p} predictors (Box-Cox lambda={lam:.4f})")
    return frame, report, spec, params


@dataclass(frozen=True)
class FrameInputs:
    """Everything assemble_frame needs, with the charging-station column swappable"""

    tables: tuple
    target_column: str
    predictor_columns: tuple
    polygons: tuple
    station_column: str = None
    boxcox_offset: float = 1.0
    boxcox_lambda: float = None
    threshold_used: float = DEFAULT_THRESHOLD
    unmatched_tracts: tuple = ()

    def assemble(self, station_counts=None):
        tables = list(self.tables)
        if station_counts is not None:
            if self.station_column not in self.predictor_columns:
                raise DataError(f"station column '{self.station_column}' is not one of the predictors")
            tables = [
                replace(t, data=t.data.drop(columns=[self.station_column]))
                if self.station_column in t.value_columns else t
                for t in tables
            ]
            counts = pd.DataFrame({self.station_column: pd.Series(station_counts, dtype=float)})
            tables.append(GeoTable(level="zcta", data=counts, name="station_counts"))
        return assemble_frame(
            tables,
            self.target_column,
            self.predictor_columns,
            self.polygons,
            boxcox_offset=self.boxcox_offset,
            boxcox_lambda=self.boxcox_lambda,
            threshold_used=self.threshold_used,
            unmatched_tracts=self.unmatched_tracts,
        )


def radius_sweep(
    inputs,
    stations,
    radii,
    model_kinds,
    w,
    gwr_kind="bisquare",
    gwr_adaptive=True,
    gwr_bandwidth=None,
    n_jobs=1,
):
    """
    Refit every model with the station column replaced by counts within each radius.

    Returns (table, best): table has columns radius, model_kind, aic; best maps
    model kind to the radius with the lowest AIC (first one on ties). A radius at
    which every zone has the same count gets NaN AIC and is never best.
    """
    radii = [float(r) for r in radii]
    if not radii:
        raise DataError("radius list is empty")
    if inputs.station_column is None:
        raise DataError("radius sweep needs a station column")

    ids = [p.zone_id for p in inputs.polygons]
    centroids = points_to_array([polygon_centroid(p) for p in inputs.polygons])

    aic_cache, logdets = {}, {}
    for radius in radii:
        if radius not in aic_cache:
            counts = count_within_radius(centroids, stations, radius)
            if np.ptp(counts) == 0:
                logger.warning(
                    f"⚠️ Radius {radius:g} mi gives every zone {int(counts[0])} station(s); "
                    "the station column cannot be standardized, AIC unavailable"
                )
                aic_cache[radius] = {kind: math.nan for kind in model_kinds}
                continue
            frame, _, _, _ = inputs.assemble(pd.Series(counts, index=ids))
            wr = align_weights(w, frame.zone_ids)
            if frame.zone_ids not in logdets and any(k in ("spatial_lag", "spatial_error") for k in model_kinds):
                logdets[frame.zone_ids] = log_det_system(wr)
            results = {}
            for kind in model_kinds:
                kernel = None
                if kind == "gwr":
                    kernel = resolve_kernel(frame, gwr_kind, gwr_adaptive, gwr_bandwidth, n_jobs)
                fit = fit_model(kind, frame, wr, kernel=kernel, logdet=logdets.get(frame.zone_ids), n_jobs=n_jobs)
                results[kind] = fit.aic
            aic_cache[radius] = results
            logger.info(f"📊 Radius {radius:g} mi: " + ", ".join(f"{k} AIC={v:.2f}" for k, v in results.items()))

    rows = [(radius, kind, aic_cache[radius][kind]) for radius in radii for kind in model_kinds]
    table = pd.DataFrame(rows, columns=["radius", "model_kind", "aic"])
    best = {}
    for kind in model_kinds:
        sub = table[(table["model_kind"] == kind) & table["aic"].notna()]
        best[kind] = float(sub.loc[sub["aic"].idxmin(), "radius"]) if len(sub) else None
    return table, best
