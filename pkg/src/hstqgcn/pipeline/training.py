"""Mini-batch training with best-validation checkpointing, evaluation, ablation."""
from __future__ import annotations

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import autodiff as ad
from ..autodiff import Adam, Tensor
from ..checkpoint import Checkpoint, CheckpointVersionError
from ..config import ModelConfig
from ..model import HybridModel, init_params
from ..prediction import coords_from_probs, summarize
from .data import DatasetBundle, DatasetSplit

log = logging.getLogger(__name__)

ABLATION_ROWS = (
    ("A", "GCN+TCN(without BOC)", False, False),
    ("B", "GCN+TCN(with BOC)", True, False),
    ("C", "GCN+QGCN+TCN(without BOC)", False, True),
    ("D", "GCN+QGCN+TCN(with BOC)", True, True),
)


class DivergenceError(RuntimeError):
    pass


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_eds: list = field(default_factory=list)
    val_rmse: list = field(default_factory=list)
    best_epoch: int = -1
    initial: dict = field(default_factory=dict)  # untrained validation metrics
    stopped_early: bool = False
    wall_clock_s: float = 0.0

    def to_json(self, include_timing=False) -> dict:
        doc = dataclasses.asdict(self)
        if not include_timing:
            doc.pop("wall_clock_s")
        return doc

    def write_curves(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "val_eds_km", "val_rmse_km"])
            for e in range(len(self.train_loss)):
                w.writerow([e + 1, repr(self.train_loss[e]), repr(self.val_loss[e]),
                            repr(self.val_eds[e]), repr(self.val_rmse[e])])


def _slice(batch: dict, idx) -> dict:
    return {k: v[idx] for k, v in batch.items()}


def _iter_batches(n, batch_size, rng=None):
    order = np.arange(n) if rng is None else rng.permutation(n)
    for s in range(0, n, batch_size):
        yield order[s:s + batch_size]


def predict_arrays(model: HybridModel, params, batch, batch_size=256) -> np.ndarray:
    """Class probabilities for every row of an encoded batch, dropout off."""
    n = len(batch["target"])
    out = [model.predict_probs(params, _slice(batch, idx)) for idx in _iter_batches(n, batch_size)]
    return np.concatenate(out, axis=0) if out else np.zeros((0, model.graph.n_nodes))


def metrics_from_probs(probs, batch, centers) -> dict:
    coords = coords_from_probs(probs, centers)
    out = summarize(coords, batch["target_coords"], np.argmax(probs, axis=1), batch["target"])
    eps = 1e-300
    out["loss"] = float(-np.mean(np.log(probs[np.arange(len(probs)), batch["target"]] + eps)))
    return out


def evaluate_params(model, params, batch) -> dict:
    if len(batch["target"]) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    return metrics_from_probs(predict_arrays(model, params, batch), batch, model.graph.centers)


def _check_compatible(config: ModelConfig, params: dict, bundle: DatasetBundle):
    fc = params.get("head.fc")
    emb = params.get("emb.taxi")
    if fc is None or emb is None:
        raise CheckpointVersionError("checkpoint lacks head/embedding parameters")
    if fc.shape[1] != bundle.n_nodes:
        raise CheckpointVersionError(f"checkpoint predicts {fc.shape[1]} grids, dataset has {bundle.n_nodes}")
    if emb.shape[0] != len(bundle.taxi_ids):
        raise CheckpointVersionError(f"checkpoint knows {emb.shape[0]} taxis, dataset has {len(bundle.taxi_ids)}")
    expected = init_params(config, bundle.n_nodes, len(bundle.taxi_ids))
    if set(expected) != set(params) or any(expected[k].shape != params[k].shape for k in expected):
        raise CheckpointVersionError("checkpoint parameters do not match the configured architecture")


def train(config: ModelConfig, split: DatasetSplit, bundle: DatasetBundle, epochs=None):
    """Adam on cross-entropy; keeps the parameters of the best validation EDS epoch."""
    config.validate()
    epochs = config.epochs if epochs is None else epochs
    if not split.train or not split.val:
        raise ValueError("training needs nonempty train and validation sets")
    model = HybridModel(config, bundle.graph())
    params = init_params(config, bundle.n_nodes, len(bundle.taxi_ids))
    tr = bundle.encode(split.train)
    va = bundle.encode(split.val)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])
    opt = Adam(config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps)
    report = TrainReport()
    start = time.perf_counter()

    initial = evaluate_params(model, params, va)
    report.initial = {"val_loss": initial["loss"], "val_eds": initial["eds_km"], "val_rmse": initial["rmse_km"],
                      "val_top1": initial["top1_acc"]}
    best = {k: t.data for k, t in params.items()}
    best_eds = np.inf
    since_best = 0
    n_train = len(tr["target"])
    for epoch in range(epochs):
        total = 0.0
        for idx in _iter_batches(n_train, config.batch_size, shuffle_rng):
            loss = model.loss(params, _slice(tr, idx), training=True, rng=dropout_rng)
            if not np.isfinite(loss.item()):
                raise DivergenceError(f"non-finite training loss at epoch {epoch + 1}")
            names = list(params)
            grads = ad.backward(loss, [params[n] for n in names])
            params = opt.step(params, dict(zip(names, grads)))
            total += loss.item() * len(idx)
        m = evaluate_params(model, params, va)
        report.train_loss.append(total / n_train)
        report.val_loss.append(m["loss"])
        report.val_eds.append(m["eds_km"])
        report.val_rmse.append(m["rmse_km"])
        log.info("epoch %d train_loss=%.4f val_loss=%.4f val_eds=%.4f", epoch + 1, report.train_loss[-1],
                 m["loss"], m["eds_km"])
        if m["eds_km"] < best_eds:
            best_eds = m["eds_km"]
            report.best_epoch = epoch
            best = {k: t.data for k, t in params.items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience > 0:
                report.stopped_early = True
                break
    report.wall_clock_s = time.perf_counter() - start
    final = {k: Tensor(v, requires_grad=True, name=k) for k, v in best.items()}
    meta = {"best_epoch": report.best_epoch, "n_nodes": bundle.n_nodes, "n_taxis": len(bundle.taxi_ids),
            "adam_steps": opt.t}
    return Checkpoint(config, final, meta), report


def evaluate(checkpoint: Checkpoint, bundle: DatasetBundle, sequences: Sequence = None) -> dict:
    """EDS, RMSE (km) and top-1 grid accuracy with dropout disabled."""
    seqs = bundle.sequences if sequences is None else sequences
    if not seqs:
        raise ValueError("cannot evaluate an empty dataset")
    _check_compatible(checkpoint.config, checkpoint.params, bundle)
    model = HybridModel(checkpoint.config, bundle.graph())
    return evaluate_params(model, checkpoint.params, bundle.encode(seqs))


def predictions(checkpoint: Checkpoint, bundle: DatasetBundle, sequences: Sequence):
    """(argmax node ids, predicted coords, true coords) for a prediction dump."""
    _check_compatible(checkpoint.config, checkpoint.params, bundle)
    model = HybridModel(checkpoint.config, bundle.graph())
    batch = bundle.encode(sequences)
    probs = predict_arrays(model, checkpoint.params, batch)
    argmax_grid = np.asarray(bundle.node_grid_ids)[np.argmax(probs, axis=1)]
    return argmax_grid, coords_from_probs(probs, model.graph.centers), batch["target_coords"]


def ablation_configs(base: ModelConfig) -> list:
    return [(key, label, base.replace(use_boc=boc, use_qgcn=q)) for key, label, boc, q in ABLATION_ROWS]


def ablate(base: ModelConfig, split: DatasetSplit, bundle: DatasetBundle, epochs=None) -> list:
    """Train and test the four flag combinations; one row dict per configuration."""
    rows = []
    for key, label, cfg in ablation_configs(base):
        ckpt, report = train(cfg, split, bundle, epochs=epochs)
        m = evaluate(ckpt, bundle, split.test)
        rows.append({"config": key, "label": label, "use_boc": cfg.use_boc, "use_qgcn": cfg.use_qgcn,
                     "eds_km": m["eds_km"], "rmse_km": m["rmse_km"], "top1_acc": m["top1_acc"],
                     "best_epoch": report.best_epoch})
    return rows


def write_ablation_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["config", "eds_km", "rmse_km"])
        for r in rows:
            w.writerow([r["config"], repr(r["eds_km"]), repr(r["rmse_km"])])
