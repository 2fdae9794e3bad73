"""Data ingestion, sequencing, synthetic data, training and ablation."""
from .data import (DataError, DatasetBundle, DatasetSplit, HistoryStep, TripRecord, TripSequence, build_sequences,
                   ingest_trips, ingest_trips_report, prepare_dataset, split_by_taxi, write_trips)
from .synthetic import generate_synthetic_city
from .training import TrainReport, ablate, ablation_configs, evaluate, train

__all__ = [
    "DataError", "DatasetBundle", "DatasetSplit", "HistoryStep", "TripRecord", "TripSequence", "build_sequences",
    "ingest_trips", "ingest_trips_report", "prepare_dataset", "split_by_taxi", "write_trips",
    "generate_synthetic_city", "TrainReport", "ablate", "ablation_configs", "evaluate", "train",
]
