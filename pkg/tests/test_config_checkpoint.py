import json

import numpy as np
import pytest

from hstqgcn.autodiff import Tensor
from hstqgcn.checkpoint import Checkpoint, CheckpointVersionError, from_json, to_json
from hstqgcn.config import ModelConfig, tiny_config
from hstqgcn.geospatial import ConfigurationError
from hstqgcn.model import init_params


def test_defaults():
    c = ModelConfig()
    assert (c.tau_km, c.n_gcn_layers, c.n_qgcn_layers, c.n_qubits) == (1.5, 3, 2, 8)
    assert (c.lr, c.batch_size, c.tcn_dilations, c.seq_len) == (1e-5, 64, [1, 2, 4], 4)
    assert (c.d_grid, c.d_taxi, c.d_hour, c.d_weekday, c.d_daytype, c.tcn_channels) == (32, 8, 4, 4, 2, 64)
    assert (c.adam_beta1, c.adam_beta2, c.adam_eps) == (0.9, 0.999, 1e-8)
    assert (c.use_boc, c.use_qgcn, c.dropout, c.epochs, c.patience) == (True, True, 0.1, 50, 10)


def test_config_roundtrip_and_validation(tmp_path):
    c = tiny_config(seed=7, use_boc=False)
    c.save(tmp_path / "c.json")
    assert ModelConfig.load(tmp_path / "c.json") == c
    with pytest.raises((ConfigurationError, ValueError)):
        ModelConfig.from_json({"not_a_field": 1})
    for bad in ({"lr": -1.0}, {"n_qubits": 0}, {"dropout": 1.0}, {"window": "tumbling"},
                {"split_fractions": [0.5, 0.5, 0.5]}):
        with pytest.raises((ConfigurationError, ValueError)):
            ModelConfig().replace(**bad).validate()


def test_flags_are_independent():
    base = ModelConfig()
    for boc in (False, True):
        for q in (False, True):
            d = {k: v for k, v in base.replace(use_boc=boc, use_qgcn=q).to_json().items() if base.to_json()[k] != v}
            assert set(d) <= {"use_boc", "use_qgcn"}


def test_param_names_and_shapes():
    cfg = ModelConfig()
    p = init_params(cfg, n_nodes=10, n_taxis=4)
    for name in ("gcn.0.W", "gcn.1.W", "gcn.2.W", "pool.assign.W", "qgcn.0.rot", "qgcn.1.ent", "qpool.0.phi",
                 "qpool.embed_W", "emb.grid", "fuse.W", "tcn.0.conv1", "tcn.0.conv2", "tcn.0.down", "head.fc"):
        assert name in p
    assert p["qgcn.0.rot"].shape == (8, 3) and p["qgcn.0.ent"].shape == (28,)
    assert p["pool.assign.W"].shape == (32, 8)
    assert p["head.fc"].shape == (64, 10)
    assert np.abs(p["qgcn.0.rot"].data).max() <= 0.1
    again = init_params(cfg, 10, 4)
    assert all(np.array_equal(p[k].data, again[k].data) for k in p)
    other = init_params(cfg.replace(seed=1), 10, 4)
    assert not np.array_equal(p["head.fc"].data, other["head.fc"].data)


def test_param_shapes_identical_across_ablation_flags():
    cfg = tiny_config()
    shapes = {k: v.shape for k, v in init_params(cfg, 6, 3).items()}
    for boc in (False, True):
        for q in (False, True):
            got = {k: v.shape for k, v in init_params(cfg.replace(use_boc=boc, use_qgcn=q), 6, 3).items()}
            assert got == shapes


def test_checkpoint_roundtrip(tmp_path):
    cfg = tiny_config()
    params = init_params(cfg, 6, 3)
    Checkpoint(cfg, params, {"best_epoch": 2}).save(tmp_path / "ck.json")
    back = Checkpoint.load(tmp_path / "ck.json")
    assert back.config == cfg and back.meta == {"best_epoch": 2}
    assert set(back.params) == set(params)
    for k in params:
        assert back.params[k].data.tobytes() == params[k].data.tobytes()
    raw = (tmp_path / "ck.json").read_bytes()
    back.save(tmp_path / "ck2.json")
    assert (tmp_path / "ck2.json").read_bytes() == raw


def test_checkpoint_version_rejected():
    doc = to_json(tiny_config(), {"w": Tensor(np.ones(2))})
    assert doc["params"][0] == {"name": "w", "shape": [2], "values": [1.0, 1.0]}
    with pytest.raises(CheckpointVersionError):
        from_json(dict(doc, version=2))
    with pytest.raises(CheckpointVersionError):
        from_json(dict(doc, format="something-else"))
    json.dumps(doc)
