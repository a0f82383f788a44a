"""
Spatial Weights Module
Queen contiguity from polygon vertices, great-circle distances, radius counts and GWR kernels
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import sparse
from shapely.geometry import MultiPolygon, Polygon

from errors import DataError

logger = logging.getLogger(__name__)

EARTH_RADIUS_MILES = 3958.8
SNAP_TOLERANCE = 1e-9
KERNELS = ("gaussian", "bisquare")


@dataclass(frozen=True)
class GeoPoint:
    longitude: float
    latitude: float

    def __post_init__(self):
        lon, lat = float(self.longitude), float(self.latitude)
        if not (math.isfinite(lon) and math.isfinite(lat)):
            raise DataError(f"non-finite coordinate ({self.longitude}, {self.latitude})")
        if not -180.0 <= lon <= 180.0:
            raise DataError(f"longitude {lon} outside [-180, 180]")
        if not -90.0 <= lat <= 90.0:
            raise DataError(f"latitude {lat} outside [-90, 90]")
        object.__setattr__(self, "longitude", lon)
        object.__setattr__(self, "latitude", lat)


def _clean_ring(zone_id, ring):
    vertices = tuple((float(x), float(y)) for x, y in ring)
    if len(vertices) < 4:
        raise DataError(f"zone '{zone_id}' has a degenerate ring with {len(vertices)} vertices (need >= 4)")
    if vertices[0] != vertices[-1]:
        raise DataError(f"zone '{zone_id}' has a ring that is not closed (first vertex != last vertex)")
    for x, y in vertices:
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DataError(f"zone '{zone_id}' has a non-finite vertex")
    return vertices


@dataclass(frozen=True)
class ZonePolygon:
    """
    One zone's boundary: rings[0] is the exterior ring, rings[1:] are holes.
    Extra components of a multi-part zone go in parts, each a tuple of rings
    laid out the same way.
    """

    zone_id: str
    rings: tuple
    parts: tuple = ()

    def __post_init__(self):
        zone_id = str(self.zone_id)
        if not self.rings:
            raise DataError(f"zone '{zone_id}' has no rings")
        rings = tuple(_clean_ring(zone_id, r) for r in self.rings)
        parts = tuple(tuple(_clean_ring(zone_id, r) for r in part) for part in self.parts)
        object.__setattr__(self, "zone_id", zone_id)
        object.__setattr__(self, "rings", rings)
        object.__setattr__(self, "parts", parts)

    def components(self):
        return (self.rings,) + self.parts

    def vertices(self):
        for component in self.components():
            for ring in component:
                yield from ring

    def to_shapely(self):
        polygons = [Polygon(c[0], c[1:]) for c in self.components()]
        return polygons[0] if len(polygons) == 1 else MultiPolygon(polygons)


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    bandwidth: float
    adaptive: bool = False

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise DataError(f"unknown kernel '{self.kind}', expected one of {KERNELS}")
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise DataError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.adaptive:
            if float(self.bandwidth) != int(self.bandwidth):
                raise DataError(f"adaptive bandwidth must be a neighbour count, got {self.bandwidth}")
            object.__setattr__(self, "bandwidth", int(self.bandwidth))
        else:
            object.__setattr__(self, "bandwidth", float(self.bandwidth))

    def to_dict(self):
        return {"kind": self.kind, "bandwidth": self.bandwidth, "adaptive": self.adaptive}


@dataclass(frozen=True)
class WeightMatrix:
    zone_ids: tuple
    matrix: sparse.csr_matrix
    standardized: bool = False
    warnings: tuple = field(default_factory=tuple)

    @property
    def n(self):
        return len(self.zone_ids)

    @property
    def entries(self):
        coo = self.matrix.tocoo()
        return {(int(i), int(j)): float(v) for i, j, v in zip(coo.row, coo.col, coo.data)}

    @property
    def degrees(self):
        return np.diff(self.matrix.indptr)

    @property
    def islands(self):
        return [self.zone_ids[i] for i in np.flatnonzero(self.degrees == 0)]

    def neighbors(self, i):
        return self.matrix.indices[self.matrix.indptr[i]:self.matrix.indptr[i + 1]].tolist()

    def is_symmetric(self):
        pattern = (self.matrix != 0).astype(np.int8)
        return (pattern != pattern.T).nnz == 0


def _as_point(p):
    return p if isinstance(p, GeoPoint) else GeoPoint(*p)


def _island_warnings(zone_ids, degrees):
    islands = [zone_ids[i] for i in np.flatnonzero(degrees == 0)]
    if not islands:
        return ()
    message = f"{len(islands)} island zone(s) without contiguity neighbours: {', '.join(islands)}"
    logger.warning(f"⚠️ {message}")
    return (message,)


def _snapped_vertices(polygons):
    """Unique vertices per zone after snapping to the tolerance grid"""
    table = []
    for idx, polygon in enumerate(polygons):
        seen = {}
        for x, y in polygon.vertices():
            key = (round(x / SNAP_TOLERANCE), round(y / SNAP_TOLERANCE))
            seen.setdefault(key, (x, y))
        table.append(seen)
    return table


def _hashed_adjacency(polygons):
    buckets = defaultdict(list)
    for idx, vertices in enumerate(_snapped_vertices(polygons)):
        for key, (x, y) in vertices.items():
            buckets[key].append((idx, x, y))

    pairs = set()
    for (kx, ky), members in buckets.items():
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                others = buckets.get((kx + dx, ky + dy))
                if not others:
                    continue
                for i, xi, yi in members:
                    for j, xj, yj in others:
                        if i == j:
                            continue
                        if abs(xi - xj) <= SNAP_TOLERANCE and abs(yi - yj) <= SNAP_TOLERANCE:
                            pairs.add((min(i, j), max(i, j)))
    return pairs


def _pairwise_adjacency(polygons):
    """Brute-force O(n^2) shared-vertex check, kept for testing the hashed build"""
    arrays = [np.array(list(v.values()), dtype=float) for v in _snapped_vertices(polygons)]
    pairs = set()
    for i in range(len(arrays)):
        for j in range(i + 1, len(arrays)):
            diff = np.abs(arrays[i][:, None, :] - arrays[j][None, :, :])
            if np.any(np.all(diff <= SNAP_TOLERANCE, axis=2)):
                pairs.add((i, j))
    return pairs


def build_queen_contiguity(polygons, method="hash"):
    """Binary, symmetric queen contiguity matrix from shared (snapped) vertices"""
    polygons = list(polygons)
    zone_ids = tuple(p.zone_id for p in polygons)
    seen = set()
    for zone_id in zone_ids:
        if zone_id in seen:
            raise DataError(f"duplicate zone_id '{zone_id}'")
        seen.add(zone_id)

    pairs = _pairwise_adjacency(polygons) if method == "pairwise" else _hashed_adjacency(polygons)

    n = len(zone_ids)
    rows = [i for i, j in pairs] + [j for i, j in pairs]
    cols = [j for i, j in pairs] + [i for i, j in pairs]
    matrix = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    matrix.sort_indices()

    warnings = _island_warnings(zone_ids, np.diff(matrix.indptr))
    logger.info(f"✅ Queen contiguity built for {n} zones ({len(pairs)} neighbour pairs)")
    return WeightMatrix(zone_ids=zone_ids, matrix=matrix, standardized=False, warnings=warnings)


def row_standardize(w):
    """Divide every nonzero row by its sum; island rows stay zero"""
    if w.standardized:
        raise DataError("weight matrix is already row-standardized")
    row_sums = np.asarray(w.matrix.sum(axis=1)).ravel()
    scale = np.zeros_like(row_sums)
    nonzero = row_sums > 0
    scale[nonzero] = 1.0 / row_sums[nonzero]
    matrix = sparse.diags(scale) @ w.matrix
    matrix = sparse.csr_matrix(matrix)
    matrix.sort_indices()
    warnings = w.warnings or _island_warnings(w.zone_ids, np.diff(matrix.indptr))
    return WeightMatrix(zone_ids=w.zone_ids, matrix=matrix, standardized=True, warnings=tuple(warnings))


def _renormalize_rows(matrix):
    row_sums = np.asarray(matrix.sum(axis=1)).ravel()
    scale = np.zeros_like(row_sums)
    scale[row_sums > 0] = 1.0 / row_sums[row_sums > 0]
    out = sparse.csr_matrix(sparse.diags(scale) @ matrix)
    out.sort_indices()
    return out


def subset_weights(w, indices):
    """Restrict W to the given zones; a standardized W is re-standardized over the kept neighbours"""
    indices = np.asarray(indices, dtype=int)
    matrix = sparse.csr_matrix(w.matrix[indices][:, indices])
    if w.standardized:
        matrix = _renormalize_rows(matrix)
    zone_ids = tuple(w.zone_ids[i] for i in indices)
    return WeightMatrix(zone_ids=zone_ids, matrix=matrix, standardized=w.standardized, warnings=w.warnings)


def align_weights(w, zone_ids):
    """Reorder (and restrict) W to follow zone_ids"""
    position = {z: i for i, z in enumerate(w.zone_ids)}
    missing = [z for z in zone_ids if z not in position]
    if missing:
        raise DataError(f"{len(missing)} zone(s) absent from the weight matrix, e.g. '{missing[0]}'")
    return subset_weights(w, [position[z] for z in zone_ids])


def spatial_lag_vector(w, x):
    x = np.asarray(x, dtype=float)
    if x.shape[0] != w.n:
        raise DataError(f"vector length {x.shape[0]} does not match weight matrix size {w.n}")
    return w.matrix @ x


def haversine_matrix(lon1, lat1, lon2, lat2):
    """Great-circle distance in miles, broadcasting over numpy inputs"""
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(lon2) - np.radians(lon1)
    a = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_MILES * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def haversine_miles(a, b):
    a, b = _as_point(a), _as_point(b)
    return float(haversine_matrix(a.longitude, a.latitude, b.longitude, b.latitude))


def polygon_centroid(p):
    geometry = p.to_shapely()
    if geometry.area <= 0.0:
        raise DataError(f"zone '{p.zone_id}' has zero area; centroid undefined")
    c = geometry.centroid
    return GeoPoint(c.x, c.y)


def points_to_array(points):
    """(n, 2) array of [longitude, latitude]"""
    points = [_as_point(p) for p in points]
    if not points:
        return np.empty((0, 2))
    return np.array([[p.longitude, p.latitude] for p in points], dtype=float)


class StationGrid:
    """
    Latitude/longitude bucket index over station points.

    Cells are square in degrees and sized from the query radius, so a radius
    query touches a handful of cells instead of every station. Built once,
    then read-only.
    """

    def __init__(self, stations, radius):
        self.radius = float(radius)
        self.coords = points_to_array(stations)
        # one degree of latitude is ~69.09 miles; never let a cell get absurdly small
        self.cell = max(self.radius / 69.0, 1e-3)
        self.cells = defaultdict(list)
        if len(self.coords):
            keys = np.floor(self.coords / self.cell).astype(np.int64)
            for idx, (kx, ky) in enumerate(keys):
                self.cells[(int(kx), int(ky))].append(idx)
        self.cells = {k: np.array(v, dtype=np.int64) for k, v in self.cells.items()}

    def _window(self, lon, lat):
        angular = self.radius / EARTH_RADIUS_MILES
        dlat = math.degrees(angular)
        lat_lo, lat_hi = lat - dlat, lat + dlat
        full_lon = lat_lo <= -90.0 or lat_hi >= 90.0
        if not full_lon:
            ratio = math.sin(angular) / max(math.cos(math.radians(max(abs(lat_lo), abs(lat_hi)))), 1e-12)
            full_lon = ratio >= 1.0
        if full_lon:
            lon_ranges = [(-180.0, 180.0)]
        else:
            dlon = math.degrees(math.asin(ratio))
            lo, hi = lon - dlon, lon + dlon
            lon_ranges = [(max(lo, -180.0), min(hi, 180.0))]
            if lo < -180.0:
                lon_ranges.append((lo + 360.0, 180.0))
            if hi > 180.0:
                lon_ranges.append((-180.0, hi - 360.0))
        return (max(lat_lo, -90.0), min(lat_hi, 90.0)), lon_ranges

    def candidates(self, lon, lat):
        (lat_lo, lat_hi), lon_ranges = self._window(lon, lat)
        ky_lo = math.floor(lat_lo / self.cell) - 1
        ky_hi = math.floor(lat_hi / self.cell) + 1
        found = []
        for lon_lo, lon_hi in lon_ranges:
            for kx in range(math.floor(lon_lo / self.cell) - 1, math.floor(lon_hi / self.cell) + 2):
                for ky in range(ky_lo, ky_hi + 1):
                    hit = self.cells.get((kx, ky))
                    if hit is not None:
                        found.append(hit)
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(found))

    def count_within(self, lon, lat):
        idx = self.candidates(lon, lat)
        if idx.size == 0:
            return 0
        d = haversine_matrix(lon, lat, self.coords[idx, 0], self.coords[idx, 1])
        return int(np.count_nonzero(d <= self.radius))


def count_within_radius(centroids, stations, radius):
    """Stations within radius miles (inclusive) of each centroid"""
    if not radius > 0:
        raise DataError(f"radius must be positive, got {radius}")
    centroids = points_to_array(centroids)
    grid = StationGrid(stations, radius)
    counts = np.zeros(len(centroids), dtype=np.int64)
    if len(grid.coords) == 0:
        return counts
    for i, (lon, lat) in enumerate(centroids):
        counts[i] = grid.count_within(lon, lat)
    return counts


def adaptive_radius(distances, neighbors):
    """Distance to the neighbors-th nearest location, counting the focal point itself as the 0th"""
    distances = np.asarray(distances, dtype=float)
    if neighbors >= distances.shape[-1]:
        raise DataError(
            f"adaptive bandwidth {neighbors} needs at most {distances.shape[-1] - 1} neighbours"
        )
    h = np.partition(distances, neighbors, axis=-1)[..., neighbors]
    if np.any(h <= 0):
        raise DataError("adaptive bandwidth collapses to zero distance (coincident locations)")
    return h


def kernel_from_distances(distances, spec):
    """Kernel weights for a distance array; the last axis runs over locations"""
    distances = np.asarray(distances, dtype=float)
    if spec.adaptive:
        h = adaptive_radius(distances, spec.bandwidth)
        h = np.expand_dims(h, -1)
    else:
        h = spec.bandwidth
    z = distances / h
    if spec.kind == "gaussian":
        return np.exp(-0.5 * z ** 2)
    return np.where(z < 1.0, (1.0 - z ** 2) ** 2, 0.0)


def kernel_weights(focal, locations, spec):
    focal = _as_point(focal)
    coords = points_to_array(locations)
    if len(coords) == 0:
        raise DataError("kernel weights need at least one location")
    d = haversine_matrix(focal.longitude, focal.latitude, coords[:, 0], coords[:, 1])
    return kernel_from_distances(d, spec)


def weights_to_edge_list(w, path):
    """CSV edge list with a one-line header: i_id, j_id, weight"""
    coo = w.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    edges = pd.DataFrame({
        "i_id": [w.zone_ids[i] for i in coo.row[order]],
        "j_id": [w.zone_ids[j] for j in coo.col[order]],
        "weight": coo.data[order],
    })
    edges.to_csv(path, index=False)
    return path
