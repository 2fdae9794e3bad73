"""City discretization, POI semantics and the proximity graph."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import _kernels

EARTH_RADIUS_KM = 6371.0
GRID_FORMAT = "hstqgcn-grid"
GRID_VERSION = 1


class ConfigurationError(ValueError):
    pass


class OutOfBoundsError(ValueError):
    pass


class GeoPoint(NamedTuple):
    lon: float
    lat: float

    def validate(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise ValueError(f"non-finite coordinate {self}")
        if not (-180.0 <= self.lon <= 180.0 and -90.0 <= self.lat <= 90.0):
            raise ValueError(f"coordinate out of range {self}")
        return self


class PoiRecord(NamedTuple):
    location: GeoPoint
    category: int


def haversine_distance(a, b) -> float:
    """Great-circle distance in km between two (lon, lat) points, in degrees."""
    lon1, lat1 = math.radians(a[0]), math.radians(a[1])
    lon2, lat2 = math.radians(b[0]), math.radians(b[1])
    h = math.sin((lat1 - lat2) / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon1 - lon2) / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(h, 1.0)))


def haversine_array(lon1, lat1, lon2, lat2) -> np.ndarray:
    """Vectorized elementwise haversine distance in km."""
    lon1, lat1, lon2, lat2 = (np.radians(np.asarray(v, dtype=np.float64)) for v in (lon1, lat1, lon2, lat2))
    h = np.sin((lat1 - lat2) / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon1 - lon2) / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(h, 1.0)))


def meters_per_degree(lat_deg: float) -> tuple[float, float]:
    """(lon, lat) meters per degree on the r = 6371 km sphere at ``lat_deg``."""
    per_lat = math.pi * EARTH_RADIUS_KM * 1000.0 / 180.0
    return per_lat * math.cos(math.radians(lat_deg)), per_lat


@dataclass(frozen=True)
class GridSpec:
    """Row-major grid; row 0 is the southern edge and column 0 the western."""

    bbox: tuple[float, float, float, float]  # min_lon, min_lat, max_lon, max_lat
    cell_size_m: float
    n_rows: int
    n_cols: int
    lon_edges: np.ndarray = field(repr=False, compare=False)
    lat_edges: np.ndarray = field(repr=False, compare=False)

    @property
    def n_cells(self) -> int:
        return self.n_rows * self.n_cols

    @property
    def centers(self) -> np.ndarray:
        """(n_cells, 2) array of (lon, lat) cell centers, indexed by GridId."""
        lon_c = 0.5 * (self.lon_edges[:-1] + self.lon_edges[1:])
        lat_c = 0.5 * (self.lat_edges[:-1] + self.lat_edges[1:])
        lon_g, lat_g = np.meshgrid(lon_c, lat_c)
        return np.column_stack([lon_g.ravel(), lat_g.ravel()])

    def center(self, grid_id: int) -> GeoPoint:
        r, c = divmod(int(grid_id), self.n_cols)
        return GeoPoint(0.5 * (self.lon_edges[c] + self.lon_edges[c + 1]),
                        0.5 * (self.lat_edges[r] + self.lat_edges[r + 1]))

    def cell_diagonal_km(self, grid_id: int) -> float:
        r, c = divmod(int(grid_id), self.n_cols)
        return haversine_distance((self.lon_edges[c], self.lat_edges[r]),
                                  (self.lon_edges[c + 1], self.lat_edges[r + 1]))

    def contains(self, p) -> bool:
        min_lon, min_lat, max_lon, max_lat = self.bbox
        return min_lon <= p[0] <= max_lon and min_lat <= p[1] <= max_lat

    def to_json(self) -> dict:
        return {
            "format": GRID_FORMAT,
            "version": GRID_VERSION,
            "bbox": list(self.bbox),
            "cell_size_m": self.cell_size_m,
            "dims": [self.n_rows, self.n_cols],
            "lon_edges": self.lon_edges.tolist(),
            "lat_edges": self.lat_edges.tolist(),
            "centers": self.centers.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GridSpec":
        if doc.get("format") != GRID_FORMAT or doc.get("version") != GRID_VERSION:
            raise ConfigurationError(f"unsupported grid document {doc.get('format')!r} v{doc.get('version')}")
        n_rows, n_cols = doc["dims"]
        return cls(tuple(doc["bbox"]), float(doc["cell_size_m"]), int(n_rows), int(n_cols),
                   np.asarray(doc["lon_edges"], dtype=np.float64), np.asarray(doc["lat_edges"], dtype=np.float64))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "GridSpec":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def build_grid(bbox: Sequence[float], cell_size_m: float) -> GridSpec:
    """Cover ``bbox`` with square cells of ``cell_size_m`` meters.

    Degree extents use meters-per-degree at the bbox center latitude.  The
    last row/column may overhang the bbox when extents are not multiples.
    """
    min_lon, min_lat, max_lon, max_lat = map(float, bbox)
    if not (max_lon > min_lon and max_lat > min_lat):
        raise ConfigurationError(f"degenerate bbox {bbox}")
    if not cell_size_m > 0:
        raise ConfigurationError("cell_size_m must be positive")
    m_lon, m_lat = meters_per_degree(0.5 * (min_lat + max_lat))
    d_lon = cell_size_m / m_lon
    d_lat = cell_size_m / m_lat
    # tolerate float fuzz when the extent is an exact multiple of the cell
    n_cols = max(1, math.ceil((max_lon - min_lon) / d_lon - 1e-9))
    n_rows = max(1, math.ceil((max_lat - min_lat) / d_lat - 1e-9))
    lon_edges = min_lon + d_lon * np.arange(n_cols + 1)
    lat_edges = min_lat + d_lat * np.arange(n_rows + 1)
    return GridSpec((min_lon, min_lat, max_lon, max_lat), float(cell_size_m), n_rows, n_cols, lon_edges, lat_edges)


def assign_cell(grid: GridSpec, p) -> int:
    """GridId of the cell containing ``p``; shared edges go to the lower id."""
    if not grid.contains(p):
        raise OutOfBoundsError(f"point {tuple(p)} outside bbox {grid.bbox}")
    c = int(np.searchsorted(grid.lon_edges, p[0], side="left")) - 1
    r = int(np.searchsorted(grid.lat_edges, p[1], side="left")) - 1
    c = min(max(c, 0), grid.n_cols - 1)
    r = min(max(r, 0), grid.n_rows - 1)
    return r * grid.n_cols + c


def assign_cells(grid: GridSpec, lon, lat) -> np.ndarray:
    """Vectorized ``assign_cell``."""
    lon = np.asarray(lon, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)
    min_lon, min_lat, max_lon, max_lat = grid.bbox
    inside = (lon >= min_lon) & (lon <= max_lon) & (lat >= min_lat) & (lat <= max_lat)
    if not inside.all():
        raise OutOfBoundsError(f"{int((~inside).sum())} points outside bbox {grid.bbox}")
    c = np.clip(np.searchsorted(grid.lon_edges, lon, side="left") - 1, 0, grid.n_cols - 1)
    r = np.clip(np.searchsorted(grid.lat_edges, lat, side="left") - 1, 0, grid.n_rows - 1)
    return (r * grid.n_cols + c).astype(np.int64)


def boc_vector(cell: int, pois: Iterable[PoiRecord], grid: GridSpec, k: int) -> np.ndarray:
    """Normalized POI-category histogram of one cell; zeros for an empty cell."""
    if k < 1:
        raise ConfigurationError("K must be >= 1")
    counts = np.zeros(k)
    for poi in pois:
        if not grid.contains(poi.location):
            continue
        if not 0 <= poi.category < k:
            raise ConfigurationError(f"POI category {poi.category} outside [0, {k})")
        if assign_cell(grid, poi.location) == cell:
            counts[poi.category] += 1
    total = counts.sum()
    return counts / total if total > 0 else counts


def boc_table(pois: Sequence[PoiRecord], grid: GridSpec, k: int) -> np.ndarray:
    """BOC vectors for every cell at once, shape (n_cells, k)."""
    if k < 1:
        raise ConfigurationError("K must be >= 1")
    counts = np.zeros((grid.n_cells, k))
    inside = [p for p in pois if grid.contains(p.location)]
    if inside:
        cats = np.array([p.category for p in inside], dtype=np.int64)
        if cats.min() < 0 or cats.max() >= k:
            raise ConfigurationError(f"POI category outside [0, {k})")
        ids = assign_cells(grid, [p.location[0] for p in inside], [p.location[1] for p in inside])
        np.add.at(counts, (ids, cats), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)


def build_adjacency(grid: GridSpec, occupied: Sequence[int], tau_km: float) -> np.ndarray:
    """0/1 proximity graph over ``occupied`` cells (in the given order).

    An edge joins two distinct nodes whose centers are strictly closer than
    ``tau_km``.
    """
    if not tau_km > 0:
        raise ConfigurationError("tau_km must be positive")
    occupied = np.asarray(occupied, dtype=np.int64)
    if occupied.size == 0:
        raise ConfigurationError("no occupied cells")
    centers = grid.centers[occupied]
    dist = _kernels.active.pairwise_haversine(np.ascontiguousarray(centers[:, 0]),
                                              np.ascontiguousarray(centers[:, 1]), EARTH_RADIUS_KM)
    adj = (dist < tau_km).astype(np.float64)
    np.fill_diagonal(adj, 0.0)
    return adj


def normalize_adjacency(adj: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 with D the row sums of A + I."""
    a_tilde = np.asarray(adj, dtype=np.float64) + np.eye(adj.shape[0])
    d = a_tilde.sum(axis=1)
    # one sqrt per entry keeps small integer cases exact, e.g. 1/sqrt(2*2) = 0.5
    return a_tilde / np.sqrt(d[:, None] * d[None, :])


# ---------------------------------------------------------------------------
# file formats


def read_pois(path) -> list[PoiRecord]:
    """Delimited POI file with header ``lon,lat,category_id``."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            p = GeoPoint(float(row["lon"]), float(row["lat"])).validate()
            out.append(PoiRecord(p, int(row["category_id"])))
    return out


def write_pois(path, pois: Sequence[PoiRecord]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lon", "lat", "category_id"])
        for p in pois:
            w.writerow([repr(float(p.location.lon)), repr(float(p.location.lat)), int(p.category)])


def save_adjacency(path, node_grid_ids: Sequence[int], adj: np.ndarray, tau_km: float):
    n = len(node_grid_ids)
    iu, ju = np.nonzero(np.triu(adj, k=1))
    doc = {
        "format": "hstqgcn-adjacency",
        "version": 1,
        "tau_km": tau_km,
        "n": n,
        "node_grid_ids": [int(g) for g in node_grid_ids],
        "edges": [[int(i), int(j)] for i, j in zip(iu, ju)],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_adjacency(path) -> tuple[list[int], np.ndarray]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "hstqgcn-adjacency" or doc.get("version") != 1:
        raise ConfigurationError("unsupported adjacency document")
    n = doc["n"]
    adj = np.zeros((n, n))
    for i, j in doc["edges"]:
        adj[i, j] = adj[j, i] = 1.0
    return doc["node_grid_ids"], adj
