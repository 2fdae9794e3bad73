"""Seeded toy city whose destinations are learnable by construction.

A handful of attractor cells share one Markov chain: from each attractor a
taxi usually heads to a fixed successor, sometimes to a second one, and now
and then to a random cell.  POIs cluster at attractors with a dominant
category each, so BOC vectors carry signal too.
"""
from __future__ import annotations

from datetime import datetime, timedelta, timezone

import numpy as np

from ..geospatial import GeoPoint, GridSpec, PoiRecord, build_grid, meters_per_degree
from .data import TripRecord

ORIGIN = (-8.64, 41.13)  # south-west corner, central Porto
EPOCH = datetime(2013, 7, 1, tzinfo=timezone.utc)


def synthetic_bbox(n_rows, n_cols, cell_size_m, origin=ORIGIN):
    lon0, lat0 = origin
    _, m_lat = meters_per_degree(0.0)
    d_lat = cell_size_m / m_lat
    m_lon, _ = meters_per_degree(lat0 + 0.5 * n_rows * d_lat)
    d_lon = cell_size_m / m_lon
    return [lon0, lat0, lon0 + n_cols * d_lon, lat0 + n_rows * d_lat]


def _point_in_cell(rng, grid: GridSpec, cell, spread=0.45):
    r, c = divmod(int(cell), grid.n_cols)
    lon_c = 0.5 * (grid.lon_edges[c] + grid.lon_edges[c + 1])
    lat_c = 0.5 * (grid.lat_edges[r] + grid.lat_edges[r + 1])
    w = grid.lon_edges[c + 1] - grid.lon_edges[c]
    h = grid.lat_edges[r + 1] - grid.lat_edges[r]
    return GeoPoint(float(lon_c + rng.uniform(-spread, spread) * w), float(lat_c + rng.uniform(-spread, spread) * h))


def generate_synthetic_city(seed=0, n_rows=8, n_cols=8, n_taxis=20, trips_per_taxi=100, k_poi=8,
                            cell_size_m=500.0, n_attractors=None, p_noise=0.15):
    """Returns (GridSpec, [PoiRecord], [TripRecord])."""
    if min(n_rows, n_cols, n_taxis, trips_per_taxi, k_poi) < 1:
        raise ValueError("synthetic city sizes must be positive")
    rng = np.random.default_rng([seed, 7])
    grid = build_grid(synthetic_bbox(n_rows, n_cols, cell_size_m), cell_size_m)
    n_cells = grid.n_cells
    n_attr = n_attractors or int(min(n_cells, max(3, n_cells // 10)))
    attractors = rng.choice(n_cells, size=n_attr, replace=False)
    primary = rng.permutation(n_attr)
    secondary = rng.permutation(n_attr)

    pois = []
    for a, cell in enumerate(attractors):
        weights = np.full(k_poi, 0.2 / max(k_poi - 1, 1))
        weights[a % k_poi] = 0.8 if k_poi > 1 else 1.0
        weights /= weights.sum()
        for cat in rng.choice(k_poi, size=30, p=weights):
            pois.append(PoiRecord(_point_in_cell(rng, grid, cell), int(cat)))
    for _ in range(2 * n_cells):
        pois.append(PoiRecord(_point_in_cell(rng, grid, rng.integers(n_cells), 0.5), int(rng.integers(k_poi))))

    trips = []
    for taxi in range(n_taxis):
        state = int(rng.integers(n_attr))
        where = _point_in_cell(rng, grid, attractors[state])
        t = EPOCH + timedelta(minutes=int(rng.integers(0, 7 * 24 * 60)))
        for _ in range(trips_per_taxi):
            u = rng.random()
            if u < p_noise:
                cell = int(rng.integers(n_cells))
            else:
                state = int(primary[state] if u < p_noise + 0.7 * (1 - p_noise) else secondary[state])
                cell = int(attractors[state])
            dest = _point_in_cell(rng, grid, cell)
            trips.append(TripRecord(taxi, where, dest, t))
            where = dest
            gap = timedelta(minutes=int(rng.integers(40, 100)))
            if rng.random() < 0.03:
                gap += timedelta(hours=5)
            t = t + gap
    return grid, pois, trips
