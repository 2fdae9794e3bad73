"""The full hybrid model: parameters, spatial branch, temporal branch, head."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelConfig
from .graph_conv import GcnLayer, diffpool_apply, diffpool_assign, gcn_stack, uniform_init
from .quantum import QgcnParams, QPoolParams, qgcn_circuit, qgcn_forward, qpool_circuit, qpool_forward
from .temporal import TcnBlock, fuse_features, tcn_forward

N_HOURS, N_WEEKDAYS, N_DAYTYPES = 24, 7, 2


@dataclass
class GraphContext:
    """Static inputs of the spatial branch."""

    a_hat: np.ndarray  # (N, N) normalized adjacency over graph nodes
    centers: np.ndarray  # (N, 2) node centers, class order of the head

    @property
    def n_nodes(self):
        return self.a_hat.shape[0]


def _w(rng, shape, fan_in):
    return Tensor(uniform_init(rng, shape, fan_in), requires_grad=True)


def _zeros(shape):
    return Tensor(np.zeros(shape), requires_grad=True)


def init_params(config: ModelConfig, n_nodes: int, n_taxis: int, seed=None) -> dict:
    """All named parameters; the draw order is fixed so a seed pins every value."""
    c = config
    if c.n_qubits > n_nodes:
        raise ValueError(f"n_qubits={c.n_qubits} exceeds graph size {n_nodes}")
    rng = np.random.default_rng([c.seed if seed is None else seed, 0])
    p = {}
    p["emb.grid"] = _w(rng, (n_nodes, c.d_grid), c.d_grid)
    p["emb.taxi"] = _w(rng, (n_taxis, c.d_taxi), c.d_taxi)
    p["emb.hour"] = _w(rng, (N_HOURS, c.d_hour), c.d_hour)
    p["emb.weekday"] = _w(rng, (N_WEEKDAYS, c.d_weekday), c.d_weekday)
    p["emb.daytype"] = _w(rng, (N_DAYTYPES, c.d_daytype), c.d_daytype)
    d_in = c.d_grid
    for i in range(c.n_gcn_layers):
        layer = GcnLayer.init(rng, d_in, c.d_hidden)
        p[f"gcn.{i}.W"] = layer.W
        if layer.down is not None:
            p[f"gcn.{i}.down"] = layer.down
        d_in = c.d_hidden
    d_h = d_in
    p["pool.assign.W"] = _w(rng, (d_h, c.n_qubits), d_h)
    p["qgcn.proj"] = _w(rng, (d_h, 1), d_h)
    p["qgcn.W_out"] = _w(rng, (1, d_h), 1)
    qp = QgcnParams.init(rng, c.n_qubits, c.n_qgcn_layers)
    for l in range(c.n_qgcn_layers):
        p[f"qgcn.{l}.rot"] = qp.rot[l]
        p[f"qgcn.{l}.ent"] = qp.ent[l]
    for l in range(c.n_qpool_layers):
        p[f"qpool.{l}.phi"] = Tensor(rng.uniform(-0.1, 0.1, (c.n_qubits, 3)), requires_grad=True)
    p["qpool.embed_W"] = _w(rng, (d_h, c.n_qubits), d_h)
    p["qpool.raw_W"] = _w(rng, (d_h, c.d_global), d_h)
    p["qpool.mlp.W1"] = _w(rng, (c.n_qubits, c.mlp_hidden), c.n_qubits)
    p["qpool.mlp.b1"] = _zeros((c.mlp_hidden,))
    p["qpool.mlp.W2"] = _w(rng, (c.mlp_hidden, c.d_global), c.mlp_hidden)
    p["qpool.mlp.b2"] = _zeros((c.d_global,))
    p["classical.W"] = _w(rng, (d_h, c.d_global), d_h)
    p["fuse.W"] = _w(rng, (c.d_grid + c.d_global, c.d_grid), c.d_grid + c.d_global)
    p["fuse.b"] = _zeros((c.d_grid,))
    c_in = c.d_grid + c.k_poi + c.d_taxi + c.d_hour + c.d_weekday + c.d_daytype
    for l, d in enumerate(c.tcn_dilations):
        block = TcnBlock.init(rng, c_in, c.tcn_channels, c.tcn_kernel, d)
        p[f"tcn.{l}.conv1"] = block.conv1
        p[f"tcn.{l}.conv1.bias"] = block.conv1_b
        p[f"tcn.{l}.conv2"] = block.conv2
        p[f"tcn.{l}.conv2.bias"] = block.conv2_b
        if block.down is not None:
            p[f"tcn.{l}.down"] = block.down
        c_in = c.tcn_channels
    p["head.fc"] = _w(rng, (c_in, n_nodes), c_in)
    p["head.bias"] = _zeros((n_nodes,))
    for name, t in p.items():
        t.name = name
    return p


class HybridModel:
    """Stateless forward over a parameter dict, so optimizers can swap tensors."""

    def __init__(self, config: ModelConfig, graph: GraphContext):
        self.config = config
        self.graph = graph
        self.a_hat = Tensor(graph.a_hat)
        self.qgcn_circuit = qgcn_circuit(config.n_qubits, config.n_qgcn_layers)
        self.qpool_circuit = qpool_circuit(config.n_qubits, config.n_qpool_layers)

    # spatial branch -------------------------------------------------------
    def gcn_layers(self, p):
        return [GcnLayer(p[f"gcn.{i}.W"], p.get(f"gcn.{i}.down")) for i in range(self.config.n_gcn_layers)]

    def spatial(self, p, return_parts=False):
        c = self.config
        x_gcn = gcn_stack(self.a_hat, p["emb.grid"], self.gcn_layers(p))
        parts = {"x_gcn": x_gcn}
        if c.use_qgcn:
            s = diffpool_assign(self.a_hat, x_gcn, p["pool.assign.W"])
            x_pooled, a_pooled = diffpool_apply(s, x_gcn, self.a_hat)
            qgcn = QgcnParams([p[f"qgcn.{l}.rot"] for l in range(c.n_qgcn_layers)],
                              [p[f"qgcn.{l}.ent"] for l in range(c.n_qgcn_layers)])
            x_qgcn = qgcn_forward(x_pooled, a_pooled, qgcn, p["qgcn.proj"], p["qgcn.W_out"], self.qgcn_circuit)
            qpool = QPoolParams([p[f"qpool.{l}.phi"] for l in range(c.n_qpool_layers)], p["qpool.embed_W"],
                                p["qpool.raw_W"], p["qpool.mlp.W1"], p["qpool.mlp.b1"], p["qpool.mlp.W2"],
                                p["qpool.mlp.b2"])
            v_global = qpool_forward(x_qgcn, qpool, self.qpool_circuit)
            parts.update(s=s, x_pooled=x_pooled, a_pooled=a_pooled, x_qgcn=x_qgcn)
        else:
            v_global = ad.reshape(ad.reshape(ad.mean(x_gcn, axis=0), (1, -1)) @ p["classical.W"], (-1,))
        parts["v_global"] = v_global
        return (v_global, parts) if return_parts else v_global

    # temporal branch + head -----------------------------------------------
    def logits(self, p, batch, training=False, rng=None):
        c = self.config
        v_global = self.spatial(p)
        boc = batch["boc"] if c.use_boc else np.zeros_like(batch["boc"])
        f_seq = fuse_features(
            ad.take_rows(p["emb.grid"], batch["grid"]),
            Tensor(boc),
            ad.take_rows(p["emb.taxi"], batch["taxi"]),
            ad.take_rows(p["emb.hour"], batch["hour"]),
            ad.take_rows(p["emb.weekday"], batch["weekday"]),
            ad.take_rows(p["emb.daytype"], batch["daytype"]),
            v_global, p["fuse.W"], p["fuse.b"],
        )
        blocks = [TcnBlock(p[f"tcn.{l}.conv1"], p[f"tcn.{l}.conv1.bias"], p[f"tcn.{l}.conv2"],
                           p[f"tcn.{l}.conv2.bias"], d, c.dropout, p.get(f"tcn.{l}.down"))
                  for l, d in enumerate(c.tcn_dilations)]
        v_seq = tcn_forward(f_seq, blocks, training=training, rng=rng)
        return v_seq @ p["head.fc"] + p["head.bias"]

    def loss(self, p, batch, training=False, rng=None):
        return ad.cross_entropy(self.logits(p, batch, training, rng), batch["target"])

    def predict_probs(self, p, batch) -> np.ndarray:
        z = self.logits(p, batch, training=False).data
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)
