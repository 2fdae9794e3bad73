"""Model, data and training configuration."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

from .geospatial import ConfigurationError


@dataclass
class ModelConfig:
    # grid and graph
    bbox: Optional[list] = None  # [min_lon, min_lat, max_lon, max_lat]
    cell_size_m: float = 218.0
    tau_km: float = 1.5
    k_poi: int = 8
    # sequencing
    seq_len: int = 4
    gap_hours: float = 3.0
    window: str = "sliding"  # or "segment": one sample per segment
    # spatial branch
    n_gcn_layers: int = 3
    d_hidden: int = 32
    n_qubits: int = 8
    n_qgcn_layers: int = 2
    n_qpool_layers: int = 2
    d_global: int = 32
    mlp_hidden: int = 32
    # temporal branch
    d_grid: int = 32
    d_taxi: int = 8
    d_hour: int = 4
    d_weekday: int = 4
    d_daytype: int = 2
    tcn_channels: int = 64
    tcn_kernel: int = 3
    tcn_dilations: list = field(default_factory=lambda: [1, 2, 4])
    dropout: float = 0.1
    # training
    lr: float = 1e-5
    batch_size: int = 64
    epochs: int = 50
    patience: int = 10
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    split_fractions: list = field(default_factory=lambda: [0.65, 0.15, 0.20])
    # ablation flags
    use_boc: bool = True
    use_qgcn: bool = True

    def validate(self):
        positive = ("cell_size_m", "tau_km", "k_poi", "seq_len", "gap_hours", "d_hidden", "n_qubits",
                    "d_global", "mlp_hidden", "d_grid", "d_taxi", "d_hour", "d_weekday", "d_daytype",
                    "tcn_channels", "tcn_kernel", "lr", "batch_size")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("n_gcn_layers", "n_qgcn_layers", "n_qpool_layers", "epochs", "patience"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative")
        if self.window not in ("sliding", "segment"):
            raise ConfigurationError(f"unknown window mode {self.window!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout must be in [0, 1)")
        if any(d < 1 for d in self.tcn_dilations):
            raise ConfigurationError("dilations must be >= 1")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9 or len(self.split_fractions) != 3:
            raise ConfigurationError("split_fractions must be three values summing to 1")
        return self

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes).validate()

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc).validate()

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "ModelConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def tiny_config(**overrides) -> ModelConfig:
    """Gradient-check scale: every dimension small enough for full finite differences."""
    base = dict(n_qubits=3, d_hidden=4, d_global=4, mlp_hidden=3, d_grid=4, d_taxi=2, d_hour=2, d_weekday=2,
                d_daytype=2, tcn_channels=3, seq_len=2, k_poi=3, n_qgcn_layers=2, n_qpool_layers=2, dropout=0.0)
    base.update(overrides)
    return ModelConfig(**base).validate()
