"""Grid classification head, probability-weighted coordinates and metrics."""
from __future__ import annotations

import csv
from typing import NamedTuple, Sequence

import numpy as np

from .autodiff import ShapeError
from .geospatial import GeoPoint, haversine_array


class PredictionOutput(NamedTuple):
    probs: np.ndarray
    coords: GeoPoint
    argmax_grid: int


def softmax_np(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def coords_from_probs(probs, centers) -> np.ndarray:
    """Probability-weighted mean of center lon and lat, separately."""
    probs = np.asarray(probs, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    if probs.shape[-1] != centers.shape[0]:
        raise ShapeError(f"{probs.shape[-1]} probabilities for {centers.shape[0]} centers")
    return probs @ centers


def predict(v_seq, fc_W, centers, fc_b=None) -> PredictionOutput:
    """Head for one sample: softmax(V_seq @ fc_W + b) and its coordinates."""
    v_seq = np.asarray(v_seq, dtype=np.float64)
    fc_W = np.asarray(fc_W, dtype=np.float64)
    if v_seq.shape != (fc_W.shape[0],):
        raise ShapeError(f"V_seq {v_seq.shape} vs fc {fc_W.shape}")
    logits = v_seq @ fc_W
    if fc_b is not None:
        logits = logits + fc_b
    probs = softmax_np(logits)
    lon, lat = coords_from_probs(probs, centers)
    # np.argmax returns the first maximum, i.e. the smallest index on ties
    return PredictionOutput(probs, GeoPoint(float(lon), float(lat)), int(np.argmax(probs)))


def _distances(predictions, truths):
    p = np.asarray(predictions, dtype=np.float64).reshape(-1, 2)
    t = np.asarray(truths, dtype=np.float64).reshape(-1, 2)
    if len(p) != len(t):
        raise ValueError(f"{len(p)} predictions for {len(t)} truths")
    if len(p) == 0:
        raise ValueError("metrics need at least one sample")
    return haversine_array(p[:, 0], p[:, 1], t[:, 0], t[:, 1])


def eds(predictions, truths) -> float:
    """Mean haversine error, km."""
    return float(np.mean(_distances(predictions, truths)))


def rmse(predictions, truths) -> float:
    """Root mean squared haversine error, km."""
    return float(np.sqrt(np.mean(_distances(predictions, truths) ** 2)))


def write_prediction_dump(path, sample_ids, argmax, pred, truth):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "argmax_grid", "pred_lon", "pred_lat", "true_lon", "true_lat"])
        for sid, g, p, t in zip(sample_ids, argmax, pred, truth):
            w.writerow([int(sid), int(g), repr(float(p[0])), repr(float(p[1])), repr(float(t[0])), repr(float(t[1]))])


def read_prediction_dump(path) -> tuple[np.ndarray, np.ndarray]:
    pred, truth = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            pred.append((float(row["pred_lon"]), float(row["pred_lat"])))
            truth.append((float(row["true_lon"]), float(row["true_lat"])))
    return np.array(pred).reshape(-1, 2), np.array(truth).reshape(-1, 2)


def score_dump(path) -> dict:
    pred, truth = read_prediction_dump(path)
    return {"n": len(pred), "eds_km": eds(pred, truth), "rmse_km": rmse(pred, truth)}


def summarize(pred_coords: Sequence, true_coords: Sequence, argmax=None, true_ids=None) -> dict:
    out = {"n": len(pred_coords), "eds_km": eds(pred_coords, true_coords), "rmse_km": rmse(pred_coords, true_coords)}
    if argmax is not None and true_ids is not None:
        out["top1_acc"] = float(np.mean(np.asarray(argmax) == np.asarray(true_ids)))
    return out
