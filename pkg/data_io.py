"""
Data I/O Module
Reads attribute tables, crosswalks, station points and GeoJSON polygons; writes run artifacts
"""

import json
import logging
import math

import numpy as np
import pandas as pd
from scipy import sparse

from errors import DataError
from fusion import CrosswalkRow, GeoTable
from spatial_weights import GeoPoint, WeightMatrix, ZonePolygon

logger = logging.getLogger(__name__)

ENCODINGS = ("utf-8", "latin-1")

COLUMN_ALIASES = {
    "tract_id": ["tract", "tract_id", "tractce", "geoid_tract", "tract_geoid", "tract_fips"],
    "zcta_id": ["zcta", "zcta_id", "zcta5", "zcta5ce10", "zcta5ce20", "zip", "zipcode", "zip_code"],
    "population_share": ["share", "population_share", "pop_share", "res_ratio", "zpoppct", "poppct"],
    "longitude": ["lon", "lng", "long", "longitude", "x"],
    "latitude": ["lat", "latitude", "y"],
    "population": ["population", "pop", "total_population", "tot_pop", "b01003_001e"],
}


def _clean_name(col):
    return str(col).lower().strip().replace(" ", "_").replace("-", "_")


def normalize_columns(df, wanted):
    """Rename known aliases (case, spaces and dashes ignored) to the canonical names in wanted"""
    mapping = {}
    for col in df.columns:
        key = _clean_name(col)
        for canonical in wanted:
            if key in COLUMN_ALIASES[canonical]:
                mapping[col] = canonical
                break
    return df.rename(columns=mapping)


def _read_csv(path, **kwargs):
    """pandas read with an encoding fallback"""
    last = None
    for encoding in ENCODINGS:
        try:
            return pd.read_csv(path, encoding=encoding, **kwargs)
        except UnicodeDecodeError as e:
            logger.warning(f"⚠️ {path}: {encoding} decode failed, trying next encoding")
            last = e
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise DataError(f"could not read '{path}': {e}")
    raise DataError(f"could not decode '{path}': {last}")


def _require(df, columns, path):
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise DataError(f"'{path}' is missing column(s) {missing}; found {list(df.columns)}")


def read_table(path, level, id_column=None, population_column=None, name=None):
    """CSV with a one-line header; the geographic id is id_column or the first column"""
    logger.info(f"📥 Loading {level} table {path}")
    df = _read_csv(path, dtype=str)
    if df.empty:
        raise DataError(f"table '{path}' has no rows")
    id_column = id_column or df.columns[0]
    _require(df, [id_column], path)
    df[id_column] = df[id_column].str.strip()
    df = df.set_index(id_column)
    for col in df.columns:
        df[col] = pd.to_numeric(df[col], errors="coerce")
    table = GeoTable(level=level, data=df, population_column=population_column, name=name or str(path))
    logger.info(f"✅ Loaded {len(df)} rows x {len(table.value_columns)} columns")
    return table


def read_crosswalk(path):
    df = normalize_columns(_read_csv(path, dtype=str), ["tract_id", "zcta_id", "population_share"])
    _require(df, ["tract_id", "zcta_id", "population_share"], path)
    shares = pd.to_numeric(df["population_share"], errors="coerce")
    if shares.isna().any():
        bad = int(np.flatnonzero(shares.isna().to_numpy())[0])
        raise DataError(f"crosswalk '{path}' row {bad} has a non-numeric population share")
    rows = [
        CrosswalkRow(t.strip(), z.strip(), s)
        for t, z, s in zip(df["tract_id"], df["zcta_id"], shares)
    ]
    logger.info(f"✅ Loaded {len(rows)} crosswalk rows from {path}")
    return rows


def read_points(path):
    """Station CSV: id, longitude, latitude"""
    df = normalize_columns(_read_csv(path), ["longitude", "latitude"])
    _require(df, ["longitude", "latitude"], path)
    points = [GeoPoint(lon, lat) for lon, lat in zip(df["longitude"], df["latitude"])]
    logger.info(f"✅ Loaded {len(points)} station points from {path}")
    return points


def read_population(path):
    """Tract population as a Series keyed by tract id"""
    df = normalize_columns(_read_csv(path, dtype=str), ["tract_id", "population"])
    id_column = "tract_id" if "tract_id" in df.columns else df.columns[0]
    value_column = "population" if "population" in df.columns else df.columns[1]
    values = pd.to_numeric(df[value_column], errors="coerce")
    if values.isna().any() or (values < 0).any():
        raise DataError(f"population file '{path}' has missing or negative populations")
    return pd.Series(values.to_numpy(), index=df[id_column].str.strip(), name="population")


def _rings(coords):
    return tuple(tuple((float(v[0]), float(v[1])) for v in ring) for ring in coords)


def read_polygons(path, id_property="ZCTA5CE10"):
    """Polygon and MultiPolygon features of a GeoJSON FeatureCollection"""
    logger.info(f"📥 Loading polygons from {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"could not read GeoJSON '{path}': {e}")

    features = doc.get("features") if isinstance(doc, dict) else None
    if not features:
        raise DataError(f"'{path}' is not a GeoJSON FeatureCollection with features")

    polygons = []
    for idx, feature in enumerate(features):
        props = feature.get("properties") or {}
        zone_id = props.get(id_property, feature.get("id"))
        if zone_id is None:
            raise DataError(f"feature {idx} in '{path}' has no '{id_property}' property")
        geometry = feature.get("geometry") or {}
        kind, coords = geometry.get("type"), geometry.get("coordinates")
        if kind == "Polygon":
            polygons.append(ZonePolygon(str(zone_id), _rings(coords)))
        elif kind == "MultiPolygon":
            parts = [_rings(p) for p in coords]
            if not parts:
                raise DataError(f"zone '{zone_id}' has an empty MultiPolygon")
            polygons.append(ZonePolygon(str(zone_id), parts[0], tuple(parts[1:])))
        else:
            raise DataError(f"zone '{zone_id}' has unsupported geometry type '{kind}'")
    logger.info(f"✅ Loaded {len(polygons)} zone polygons")
    return polygons


def read_edge_list(path, zone_ids, standardized=False):
    """WeightMatrix from an i_id, j_id, weight CSV over the given zone order"""
    df = _read_csv(path, dtype={"i_id": str, "j_id": str})
    _require(df, ["i_id", "j_id", "weight"], path)
    position = {z: i for i, z in enumerate(zone_ids)}
    unknown = sorted(set(df["i_id"]).union(df["j_id"]) - set(position))
    if unknown:
        raise DataError(f"edge list '{path}' names unknown zone '{unknown[0]}'")
    n = len(zone_ids)
    matrix = sparse.csr_matrix(
        (df["weight"].astype(float), (df["i_id"].map(position), df["j_id"].map(position))), shape=(n, n)
    )
    matrix.sort_indices()
    return WeightMatrix(zone_ids=tuple(zone_ids), matrix=matrix, standardized=standardized)


def sanitize(obj):
    """Non-finite floats become None; numpy scalars and arrays become plain Python"""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(path, obj):
    text = json.dumps(sanitize(obj), indent=2, sort_keys=True, allow_nan=False, ensure_ascii=False)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text + "\n")
    return path


def write_text(path, text):
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    return path


def write_csv(df, path):
    df.to_csv(path, index=False, float_format="%.10g")
    return path
