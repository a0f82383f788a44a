import numpy as np
import pytest

from estimators import ModelFrame
from sample_data import generate_study_area, grid_polygons
from spatial_weights import ZonePolygon, build_queen_contiguity, points_to_array, polygon_centroid, row_standardize


def unit_square(zone_id, x0, y0, size=1.0):
    ring = ((x0, y0), (x0 + size, y0), (x0 + size, y0 + size), (x0, y0 + size), (x0, y0))
    return (zone_id, (ring,))


@pytest.fixture
def square_grid():
    """Factory: rows x cols unit-square ZonePolygons on integer coordinates"""
    def make(rows, cols):
        return [
            ZonePolygon(*unit_square(f"z{r}_{c}", float(c), float(r)))
            for r in range(rows)
            for c in range(cols)
        ]

    return make


@pytest.fixture(scope="session")
def lattice_20():
    """20 x 20 queen lattice, row-standardized, with centroids"""
    polygons = grid_polygons(20, 20, cell=0.05)
    w = row_standardize(build_queen_contiguity(polygons))
    centroids = points_to_array([polygon_centroid(p) for p in polygons])
    return w, centroids


@pytest.fixture
def make_frame():
    """Factory: ModelFrame from arrays, with placeholder centroids when none are given"""

    def make(X, y, centroids=None, columns=None, zone_ids=None):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        n = X.shape[0]
        if centroids is None:
            centroids = np.column_stack([np.linspace(-76.0, -75.0, n), np.full(n, 42.0)])
        return ModelFrame(
            zone_ids=zone_ids or tuple(f"{i:05d}" for i in range(n)),
            y=y,
            X=X,
            columns=columns or tuple(f"x{j + 1}" for j in range(X.shape[1])),
            centroids=centroids,
        )

    return make


@pytest.fixture
def lag_dgp(lattice_20, make_frame):
    """Factory: frame drawn from y = (I - rho W)^-1 (X beta + e) on the 20 x 20 lattice"""
    w, centroids = lattice_20

    def make(seed, rho=0.5, beta=(1.0, 2.0, -1.0), sigma=1.0, error_process=False):
        rng = np.random.default_rng(seed)
        n = w.n
        X = rng.normal(size=(n, len(beta) - 1))
        eps = rng.normal(0.0, sigma, n)
        A = np.eye(n) - rho * w.matrix.toarray()
        if error_process:
            y = beta[0] + X @ np.asarray(beta[1:]) + np.linalg.solve(A, eps)
        else:
            y = np.linalg.solve(A, beta[0] + X @ np.asarray(beta[1:]) + eps)
        return make_frame(X, y, centroids=centroids, zone_ids=w.zone_ids)

    return make


@pytest.fixture
def study_area(tmp_path):
    """Synthetic 50-zone study area written to a temporary directory"""
    return generate_study_area(str(tmp_path / "study"), rows=10, cols=5, seed=7)
