"""
Sample Data Generator
Seeded synthetic study area: ZCTA grid polygons, tract tables, crosswalk, stations and a
target drawn from a known Spatial Lag process, plus a ready-to-run config.json
"""

import argparse
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from fusion import GeoTable, aggregate_to_zcta, crosswalk_assign
from spatial_weights import (
    ZonePolygon,
    build_queen_contiguity,
    count_within_radius,
    points_to_array,
    polygon_centroid,
    row_standardize,
)
from transforms import zscore

logger = logging.getLogger(__name__)

ORIGIN = (-76.0, 42.0)
TARGET = "ev_per_1000"
STATION_COLUMN = "stations_near"
PREDICTORS = ("median_income", "pct_multi_unit", STATION_COLUMN)
TRUE_BETA = (4.0, 0.8, -0.5, 1.0)


@dataclass
class StudyArea:
    directory: str
    config_path: str
    zone_ids: list
    retained_ids: list
    truth: dict = field(default_factory=dict)

    def path(self, name):
        return os.path.join(self.directory, name)


def grid_polygons(rows, cols, cell=0.1, origin=ORIGIN, id_start=14000):
    """rows x cols unit squares of `cell` degrees, ids counting up from id_start"""
    polygons = []
    for r in range(rows):
        for c in range(cols):
            x0 = round(origin[0] + c * cell, 9)
            y0 = round(origin[1] + r * cell, 9)
            x1 = round(origin[0] + (c + 1) * cell, 9)
            y1 = round(origin[1] + (r + 1) * cell, 9)
            ring = ((x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0))
            polygons.append(ZonePolygon(f"{id_start + r * cols + c:05d}", (ring,)))
    return polygons


def polygons_geojson(polygons, id_property="ZCTA5CE10"):
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {id_property: p.zone_id},
                "geometry": {"type": "Polygon", "coordinates": [[list(v) for v in ring] for ring in p.rings]},
            }
            for p in polygons
        ],
    }


def random_stations(rng, n, rows, cols, cell=0.1, origin=ORIGIN, clusters=3):
    """Half uniform over a wide box around the grid, half in a few gaussian clusters"""
    lon_lo, lon_hi = origin[0] - 3.0, origin[0] + cols * cell + 3.0
    lat_lo, lat_hi = origin[1] - 2.0, origin[1] + rows * cell + 2.0
    n_uniform = n // 2
    lon = list(rng.uniform(lon_lo, lon_hi, n_uniform))
    lat = list(rng.uniform(lat_lo, lat_hi, n_uniform))
    centers = np.column_stack([
        rng.uniform(origin[0] - 0.5, origin[0] + cols * cell + 0.5, clusters),
        rng.uniform(origin[1] - 0.5, origin[1] + rows * cell + 0.5, clusters),
    ])
    pick = rng.integers(0, clusters, n - n_uniform)
    lon += list(centers[pick, 0] + rng.normal(0.0, 0.3, n - n_uniform))
    lat += list(centers[pick, 1] + rng.normal(0.0, 0.3, n - n_uniform))
    lon = np.clip(lon, -180.0, 180.0)
    lat = np.clip(lat, -90.0, 90.0)
    return pd.DataFrame({"station_id": [f"S{i:04d}" for i in range(n)], "longitude": lon, "latitude": lat})


def spatial_lag_draw(w, X, beta, rho, noise, rng):
    """y = (I - rho W)^-1 (beta0 + X beta + e)"""
    n = X.shape[0]
    mean = beta[0] + X @ np.asarray(beta[1:])
    A = np.eye(n) - rho * w.matrix.toarray()
    return np.linalg.solve(A, mean + rng.normal(0.0, noise, n))


def generate_study_area(
    directory,
    rows=10,
    cols=5,
    seed=0,
    rho=0.75,
    noise=0.5,
    station_radius=25.0,
    n_stations=300,
    missing=True,
    cell=0.1,
):
    """Write a complete synthetic input set and config.json into directory"""
    os.makedirs(directory, exist_ok=True)
    rng = np.random.default_rng(seed)
    polygons = grid_polygons(rows, cols, cell)
    ids = [p.zone_id for p in polygons]
    n = len(ids)

    # two tracts per zone, each mostly inside its own zone
    crosswalk, tract_rows = [], []
    for k, zid in enumerate(ids):
        neighbour = ids[k + 1] if (k % cols) < cols - 1 else ids[k - 1]
        for t in (1, 2):
            tract = f"{zid}{t:02d}"
            share = float(np.round(rng.uniform(0.55, 1.0), 4))
            crosswalk.append((tract, zid, share))
            if share < 1.0:
                crosswalk.append((tract, neighbour, float(np.round(1.0 - share, 4))))
            tract_rows.append({
                "tract_id": tract,
                "median_income": float(np.round(rng.normal(60.0, 15.0) + 2.0 * (k // cols), 3)),
                "population": int(rng.integers(200, 6000)),
            })
    tracts = pd.DataFrame(tract_rows)
    crosswalk_df = pd.DataFrame(crosswalk, columns=["tract_id", "zcta_id", "population_share"])

    assignment, _ = crosswalk_assign(crosswalk, 0.2)
    tract_table = GeoTable("tract", tracts.set_index("tract_id")[["median_income"]], name="tracts")
    income = aggregate_to_zcta(tract_table, assignment, tracts.set_index("tract_id")["population"]).data["median_income"]

    stations = random_stations(rng, n_stations, rows, cols, cell)
    centroids = points_to_array([polygon_centroid(p) for p in polygons])
    station_counts = count_within_radius(centroids, stations[["longitude", "latitude"]].to_numpy(), station_radius)

    zcta = pd.DataFrame({
        "zcta_id": ids,
        "pct_multi_unit": np.round(rng.uniform(5.0, 60.0, n), 3),
        STATION_COLUMN: station_counts,
    }).set_index("zcta_id")
    zcta["median_income"] = income.reindex(zcta.index)
    if missing:
        zcta.iloc[-1, zcta.columns.get_loc("pct_multi_unit")] = np.nan

    retained = [z for z in ids if zcta.loc[z, list(PREDICTORS)].notna().all()]
    by_id = dict(zip(ids, polygons))
    w = row_standardize(build_queen_contiguity([by_id[z] for z in retained]))
    standardized, _ = zscore(zcta.loc[retained, list(PREDICTORS)])
    y = spatial_lag_draw(w, standardized.to_numpy(), TRUE_BETA, rho, noise, rng)

    target = pd.Series(10.0, index=ids, name=TARGET)
    target.loc[retained] = np.round(y, 10)
    zcta[TARGET] = target

    zcta[["pct_multi_unit", STATION_COLUMN, TARGET]].reset_index().to_csv(
        os.path.join(directory, "zcta_attributes.csv"), index=False
    )
    tracts[["tract_id", "median_income"]].to_csv(os.path.join(directory, "tract_attributes.csv"), index=False)
    tracts[["tract_id", "population"]].to_csv(os.path.join(directory, "tract_population.csv"), index=False)
    crosswalk_df.to_csv(os.path.join(directory, "crosswalk.csv"), index=False)
    stations.to_csv(os.path.join(directory, "stations.csv"), index=False)
    with open(os.path.join(directory, "zcta_polygons.geojson"), "w", encoding="utf-8") as f:
        json.dump(polygons_geojson(polygons), f)

    config = {
        "tables": [
            {"path": "zcta_attributes.csv", "level": "zcta"},
            {"path": "tract_attributes.csv", "level": "tract"},
        ],
        "crosswalk": "crosswalk.csv",
        "tract_population": "tract_population.csv",
        "polygons": "zcta_polygons.geojson",
        "stations": "stations.csv",
        "station_column": STATION_COLUMN,
        "target": TARGET,
        "predictors": list(PREDICTORS),
        "boxcox_offset": 1.0,
        "boxcox_lambda": 1.0,
        "permutations": 99,
        "output_dir": "output",
    }
    config_path = os.path.join(directory, "config.json")
    with open(config_path, "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2)

    logger.info(f"✅ Synthetic study area with {n} zones written to {directory}")
    return StudyArea(
        directory=directory,
        config_path=config_path,
        zone_ids=ids,
        retained_ids=retained,
        truth={"rho": rho, "beta": list(TRUE_BETA), "station_radius": station_radius, "noise": noise},
    )


def main(argv=None):
    parser = argparse.ArgumentParser(description="Write a synthetic study area for the spatial modelling pipeline")
    parser.add_argument("directory", help="output directory for the generated inputs")
    parser.add_argument("--rows", type=int, default=10)
    parser.add_argument("--cols", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--rho", type=float, default=0.75)
    parser.add_argument("--noise", type=float, default=0.5)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    area = generate_study_area(
        args.directory, rows=args.rows, cols=args.cols, seed=args.seed, rho=args.rho, noise=args.noise
    )
    print(f"Config written to {area.config_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
