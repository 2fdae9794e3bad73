"""Trip ingestion, trajectory sequencing, taxi-level splits and dataset bundles."""
from __future__ import annotations

import csv
import json
import logging
import os
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from ..geospatial import (ConfigurationError, GeoPoint, GridSpec, assign_cells, boc_table, build_adjacency,
                          build_grid, load_adjacency, normalize_adjacency, save_adjacency)
from ..model import GraphContext

log = logging.getLogger(__name__)

TRIP_COLUMNS = ("taxi_id", "pickup_time", "pickup_lon", "pickup_lat", "dropoff_lon", "dropoff_lat")
SEQUENCES_FORMAT = "hstqgcn-sequences"


class DataError(ValueError):
    pass


def parse_utc(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_utc(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class TripRecord:
    taxi_id: int
    pickup: GeoPoint
    dropoff: GeoPoint
    pickup_time: datetime

    @property
    def hour(self) -> int:
        return self.pickup_time.hour

    @property
    def weekday(self) -> int:
        return self.pickup_time.weekday()

    @property
    def day_type(self) -> int:
        """0 weekday, 1 weekend."""
        return int(self.pickup_time.weekday() >= 5)


class HistoryStep(NamedTuple):
    grid_id: int
    boc: np.ndarray
    hour: int
    weekday: int
    day_type: int


@dataclass
class TripSequence:
    taxi_id: int
    history: List[HistoryStep]
    target_grid: int
    target_coords: GeoPoint


@dataclass
class IngestReport:
    rows: int = 0
    skipped: int = 0
    reasons: dict = field(default_factory=dict)


def ingest_trips_report(path) -> tuple[list[TripRecord], IngestReport]:
    report = IngestReport()
    records = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read trips file {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            log.warning("trips file %s is empty", path)
            return [], report
        missing = set(TRIP_COLUMNS) - set(reader.fieldnames)
        if missing:
            raise DataError(f"trips file {path} lacks columns {sorted(missing)}")
        for row in reader:
            report.rows += 1
            try:
                pickup = GeoPoint(float(row["pickup_lon"]), float(row["pickup_lat"])).validate()
                dropoff = GeoPoint(float(row["dropoff_lon"]), float(row["dropoff_lat"])).validate()
                rec = TripRecord(int(row["taxi_id"]), pickup, dropoff, parse_utc(row["pickup_time"]))
            except (ValueError, TypeError, KeyError) as exc:
                report.skipped += 1
                key = type(exc).__name__
                report.reasons[key] = report.reasons.get(key, 0) + 1
                continue
            records.append(rec)
    if report.rows == 0:
        log.warning("trips file %s has no data rows", path)
    elif report.skipped * 2 > report.rows:
        raise DataError(f"{report.skipped}/{report.rows} malformed rows in {path}")
    elif report.skipped:
        log.warning("skipped %d malformed rows of %d in %s", report.skipped, report.rows, path)
    return records, report


def ingest_trips(path) -> list[TripRecord]:
    return ingest_trips_report(path)[0]


def write_trips(path, trips: Sequence[TripRecord]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIP_COLUMNS)
        for t in trips:
            w.writerow([t.taxi_id, format_utc(t.pickup_time), repr(float(t.pickup.lon)), repr(float(t.pickup.lat)),
                        repr(float(t.dropoff.lon)), repr(float(t.dropoff.lat))])


def filter_to_grid(trips: Sequence[TripRecord], grid: GridSpec) -> list[TripRecord]:
    return [t for t in trips if grid.contains(t.pickup) and grid.contains(t.dropoff)]


def segment_trips(trips: Sequence[TripRecord], gap_hours=3.0) -> list[list[TripRecord]]:
    """Per-taxi trajectory segments, split where consecutive pickups are > gap apart."""
    by_taxi = defaultdict(list)
    for t in trips:
        by_taxi[t.taxi_id].append(t)
    segments = []
    limit = gap_hours * 3600.0
    for taxi in sorted(by_taxi):
        ordered = sorted(by_taxi[taxi], key=lambda t: t.pickup_time)
        current = [ordered[0]]
        for prev, nxt in zip(ordered, ordered[1:]):
            if (nxt.pickup_time - prev.pickup_time).total_seconds() > limit:
                segments.append(current)
                current = []
            current.append(nxt)
        segments.append(current)
    return segments


def build_sequences(trips: Sequence[TripRecord], grid: GridSpec, bocs: np.ndarray, gap_hours=3.0, seq_len=4,
                    window="sliding") -> list[TripSequence]:
    """Windows of ``seq_len + 1`` consecutive trips inside each segment.

    History steps are the destination cells of the first ``seq_len`` trips
    with their pickup-time context; the target is the next trip's dropoff.
    ``window="segment"`` keeps only the first window of each segment.
    """
    if not trips:
        return []
    out = []
    for seg in segment_trips(trips, gap_hours):
        if len(seg) < seq_len + 1:
            continue
        cells = assign_cells(grid, [t.dropoff.lon for t in seg], [t.dropoff.lat for t in seg])
        starts = range(len(seg) - seq_len) if window == "sliding" else range(1)
        for s in starts:
            hist = [HistoryStep(int(cells[i]), bocs[cells[i]], seg[i].hour, seg[i].weekday, seg[i].day_type)
                    for i in range(s, s + seq_len)]
            tgt = seg[s + seq_len]
            out.append(TripSequence(tgt.taxi_id, hist, int(cells[s + seq_len]), tgt.dropoff))
    return out


@dataclass
class DatasetSplit:
    train: list
    val: list
    test: list
    taxis: dict  # split name -> sorted taxi ids


def split_by_taxi(sequences: Sequence[TripSequence], fractions=(0.65, 0.15, 0.20), seed=0) -> DatasetSplit:
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError("fractions must be three values summing to 1")
    taxis = sorted({s.taxi_id for s in sequences})
    n = len(taxis)
    if n < 3:
        raise ConfigurationError(f"need at least 3 taxis to split, got {n}")
    order = np.random.default_rng([seed, 3]).permutation(n)
    shuffled = [taxis[i] for i in order]
    n_train = max(1, int(round(fractions[0] * n)))
    n_val = max(1, int(round(fractions[1] * n)))
    n_train = min(n_train, n - 2)
    n_val = min(n_val, n - n_train - 1)
    groups = {"train": shuffled[:n_train], "val": shuffled[n_train:n_train + n_val],
              "test": shuffled[n_train + n_val:]}
    lookup = {t: name for name, ids in groups.items() for t in ids}
    parts = {"train": [], "val": [], "test": []}
    for s in sequences:
        parts[lookup[s.taxi_id]].append(s)
    return DatasetSplit(parts["train"], parts["val"], parts["test"], {k: sorted(v) for k, v in groups.items()})


# ---------------------------------------------------------------------------
# bundles: everything train/evaluate needs, as files on disk


@dataclass
class DatasetBundle:
    grid: GridSpec
    node_grid_ids: list  # graph node i is grid cell node_grid_ids[i]
    adjacency: np.ndarray
    sequences: list
    k_poi: int
    tau_km: float
    taxi_ids: list  # embedding vocabulary
    n_pois: int = 0

    @property
    def n_nodes(self):
        return len(self.node_grid_ids)

    def graph(self) -> GraphContext:
        return GraphContext(normalize_adjacency(self.adjacency), self.grid.centers[np.asarray(self.node_grid_ids)])

    def encode(self, sequences: Optional[Sequence[TripSequence]] = None) -> dict:
        """Stack sequences into model-ready index arrays."""
        seqs = self.sequences if sequences is None else sequences
        node_of = {g: i for i, g in enumerate(self.node_grid_ids)}
        taxi_of = {t: i for i, t in enumerate(self.taxi_ids)}
        L = len(seqs[0].history) if seqs else 0
        out = {
            "grid": np.array([[node_of[h.grid_id] for h in s.history] for s in seqs], dtype=np.int64).reshape(-1, L),
            "boc": np.array([[h.boc for h in s.history] for s in seqs], dtype=np.float64).reshape(-1, L, self.k_poi),
            "taxi": np.array([taxi_of[s.taxi_id] for s in seqs], dtype=np.int64),
            "hour": np.array([[h.hour for h in s.history] for s in seqs], dtype=np.int64).reshape(-1, L),
            "weekday": np.array([[h.weekday for h in s.history] for s in seqs], dtype=np.int64).reshape(-1, L),
            "daytype": np.array([[h.day_type for h in s.history] for s in seqs], dtype=np.int64).reshape(-1, L),
            "target": np.array([node_of[s.target_grid] for s in seqs], dtype=np.int64),
            "target_coords": np.array([tuple(s.target_coords) for s in seqs], dtype=np.float64).reshape(-1, 2),
        }
        return out

    def summary(self) -> dict:
        return {"sequences": len(self.sequences), "grids": self.n_nodes, "pois": self.n_pois,
                "edges": int(np.triu(self.adjacency, 1).sum()), "taxis": len(self.taxi_ids)}

    def save(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        self.grid.save(os.path.join(out_dir, "grid.json"))
        save_adjacency(os.path.join(out_dir, "adjacency.json"), self.node_grid_ids, self.adjacency, self.tau_km)
        doc = {
            "format": SEQUENCES_FORMAT,
            "version": 1,
            "k_poi": self.k_poi,
            "n_pois": self.n_pois,
            "taxi_ids": [int(t) for t in self.taxi_ids],
            "sequences": [
                {
                    "taxi_id": int(s.taxi_id),
                    "history": [[int(h.grid_id), int(h.hour), int(h.weekday), int(h.day_type)] for h in s.history],
                    "boc": [[float(v) for v in h.boc] for h in s.history],
                    "target_grid": int(s.target_grid),
                    "target": [float(s.target_coords.lon), float(s.target_coords.lat)],
                }
                for s in self.sequences
            ],
        }
        with open(os.path.join(out_dir, "sequences.json"), "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, data_dir) -> "DatasetBundle":
        paths = [os.path.join(data_dir, n) for n in ("grid.json", "adjacency.json", "sequences.json")]
        for p in paths:
            if not os.path.exists(p):
                raise DataError(f"missing dataset artifact {p}")
        grid = GridSpec.load(paths[0])
        node_ids, adj = load_adjacency(paths[1])
        with open(paths[1]) as fh:
            tau = json.load(fh)["tau_km"]
        with open(paths[2]) as fh:
            doc = json.load(fh)
        if doc.get("format") != SEQUENCES_FORMAT or doc.get("version") != 1:
            raise DataError("unsupported sequences document")
        seqs = []
        for s in doc["sequences"]:
            hist = [HistoryStep(h[0], np.asarray(b, dtype=np.float64), h[1], h[2], h[3])
                    for h, b in zip(s["history"], s["boc"])]
            seqs.append(TripSequence(s["taxi_id"], hist, s["target_grid"], GeoPoint(*s["target"])))
        return cls(grid, node_ids, adj, seqs, doc["k_poi"], tau, doc["taxi_ids"], doc.get("n_pois", 0))


def occupied_cells(trips: Sequence[TripRecord], grid: GridSpec) -> list[int]:
    if not trips:
        return []
    lon = [t.pickup.lon for t in trips] + [t.dropoff.lon for t in trips]
    lat = [t.pickup.lat for t in trips] + [t.dropoff.lat for t in trips]
    return sorted(int(g) for g in np.unique(assign_cells(grid, lon, lat)))


def prepare_dataset(trips: Sequence[TripRecord], pois, config, grid: Optional[GridSpec] = None) -> DatasetBundle:
    """Grid, occupied-cell graph, BOC table and sequences from raw records."""
    if grid is None:
        if config.bbox is None:
            raise ConfigurationError("config.bbox is required to build the grid")
        grid = build_grid(config.bbox, config.cell_size_m)
    kept = filter_to_grid(trips, grid)
    if len(kept) < len(trips):
        log.info("dropped %d trips outside the bbox", len(trips) - len(kept))
    if not kept:
        raise DataError("no trips inside the grid")
    bocs = boc_table(pois, grid, config.k_poi)
    occupied = occupied_cells(kept, grid)
    adj = build_adjacency(grid, occupied, config.tau_km)
    seqs = build_sequences(kept, grid, bocs, config.gap_hours, config.seq_len, config.window)
    taxis = sorted({t.taxi_id for t in kept})
    return DatasetBundle(grid, occupied, adj, seqs, config.k_poi, config.tau_km, taxis, len(pois))

