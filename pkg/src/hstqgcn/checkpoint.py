"""Versioned JSON container of named parameter tensors."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .config import ModelConfig

FORMAT = "hstqgcn-checkpoint"
VERSION = 1


class CheckpointVersionError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict
    meta: dict = field(default_factory=dict)

    def save(self, path):
        save(path, self.config, self.params, self.meta)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls(*load(path))


def to_json(config: ModelConfig, params: dict, meta: dict | None = None) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": config.to_json(),
        "meta": meta or {},
        "params": [
            {"name": name, "shape": list(t.shape), "values": np.asarray(t.data).ravel().tolist()}
            for name, t in sorted(params.items())
        ],
    }


def from_json(doc: dict) -> tuple[ModelConfig, dict, dict]:
    if doc.get("format") != FORMAT:
        raise CheckpointVersionError(f"not a checkpoint: format={doc.get('format')!r}")
    if doc.get("version") != VERSION:
        raise CheckpointVersionError(f"checkpoint version {doc.get('version')} unsupported (want {VERSION})")
    config = ModelConfig.from_json(doc["config"])
    params = {}
    for entry in doc["params"]:
        params[entry["name"]] = Tensor(np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"]),
                                       requires_grad=True, name=entry["name"])
    return config, params, doc.get("meta", {})


def save(path, config, params, meta=None):
    with open(path, "w") as fh:
        json.dump(to_json(config, params, meta), fh)


def load(path):
    with open(path) as fh:
        return from_json(json.load(fh))
