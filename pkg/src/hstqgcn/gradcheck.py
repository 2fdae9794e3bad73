"""Finite-difference and parameter-shift checks over every differentiable piece."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import tiny_config
from .geospatial import normalize_adjacency
from .graph_conv import GcnLayer, diffpool_apply, diffpool_assign, gcn_stack
from .model import GraphContext, HybridModel, init_params
from .quantum import (QgcnParams, QPoolParams, finite_difference_jacobian, parameter_shift_jacobian, qgcn_angles,
                      qgcn_circuit, qgcn_forward, qpool_circuit, qpool_forward)
from .temporal import TcnBlock, fuse_features, tcn_forward

FD_STEP = 1e-5
FD_RTOL = 1e-4
SHIFT_ATOL = 1e-8
REL_FLOOR = 1e-5


def rel_error(analytic, numeric, floor=REL_FLOOR) -> float:
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def numeric_grads(fn: Callable, arrays: Sequence[np.ndarray], h=FD_STEP, coords=None) -> list:
    """Central differences of scalar ``fn(*tensors)`` for each array (or chosen flat coords)."""
    out = []
    for i, base in enumerate(arrays):
        g = np.zeros(base.size)
        picks = range(base.size) if coords is None or coords[i] is None else coords[i]
        for j in picks:
            vals = []
            for sign in (1.0, -1.0):
                bumped = [a.copy() for a in arrays]
                bumped[i].reshape(-1)[j] += sign * h
                vals.append(fn(*[Tensor(b) for b in bumped]).item())
            g[j] = (vals[0] - vals[1]) / (2 * h)
        out.append(g.reshape(base.shape))
    return out


def check_fn(fn, arrays, fault=1.0, h=FD_STEP) -> float:
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    loss = fn(*tensors)
    analytic = [g * fault for g in ad.backward(loss, tensors)]
    numeric = numeric_grads(fn, arrays, h)
    return max(rel_error(a, n) for a, n in zip(analytic, numeric))


def _weighted(out, w):
    return ad.sum(ad.mul(out, Tensor(w)))


# individual components -----------------------------------------------------


def classical_components(rng) -> dict:
    """name -> (fn, arrays); every fn returns a scalar Tensor."""
    comps = {}
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    w = rng.normal(size=(3, 2))
    comps["matmul"] = (lambda x, y: _weighted(x @ y, w), [a, b])
    # keep relu inputs away from the kink
    x = rng.normal(size=(4, 5))
    x = np.where(np.abs(x) < 0.05, 0.1, x)
    wx = rng.normal(size=(4, 5))
    comps["relu"] = (lambda t: _weighted(ad.relu(t), wx), [x])
    comps["tanh"] = (lambda t: _weighted(ad.tanh(t), wx), [x])
    comps["softmax"] = (lambda t: _weighted(ad.softmax(t, axis=1), wx), [rng.normal(size=(4, 5))])
    tgt = rng.integers(0, 5, size=4)
    comps["cross_entropy"] = (lambda t: ad.cross_entropy(t, tgt), [rng.normal(size=(4, 5))])
    xs = rng.normal(size=(2, 3, 6))
    wc = rng.normal(size=(4, 3, 3))
    bc = rng.normal(size=4)
    wo = rng.normal(size=(2, 4, 6))
    comps["causal_conv1d"] = (lambda t, k, bb: _weighted(ad.causal_conv1d(t, k, bb, dilation=2), wo), [xs, wc, bc])
    tab = rng.normal(size=(5, 3))
    ids = np.array([[0, 2, 2], [4, 0, 1]])
    we = rng.normal(size=(2, 3, 3))
    comps["embedding"] = (lambda t: _weighted(ad.take_rows(t, ids), we), [tab])
    p1, p2 = rng.normal(size=(2, 3)), rng.normal(size=(2, 4))
    wcat = rng.normal(size=(2, 7))
    comps["concat"] = (lambda u, v: _weighted(ad.concat([u, v], axis=1), wcat), [p1, p2])
    comps["mean"] = (lambda t: _weighted(ad.mean(t, axis=0), wx[0]), [x])
    # reuse of one node: gradients must accumulate
    comps["reuse"] = (lambda t: ad.sum(ad.mul(ad.tanh(t), ad.tanh(t))) + _weighted(ad.tanh(t), wx), [x])
    return comps


def _sym_adj(rng, n, p=0.5):
    upper = np.triu((rng.random((n, n)) < p).astype(float), 1)
    return normalize_adjacency(upper + upper.T)


def graph_components(rng) -> dict:
    n, d, nq = 6, 4, 3
    a_hat = _sym_adj(rng, n)
    x0 = rng.normal(size=(n, 3))
    w0, down0 = rng.normal(size=(3, d)), rng.normal(size=(3, d))
    w1, w2 = rng.normal(size=(d, d)), rng.normal(size=(d, nq))
    wx, wa = rng.normal(size=(nq, d)), rng.normal(size=(nq, nq))

    def pooled(x, a0, b0, a1, asg):
        h = gcn_stack(a_hat, x, [GcnLayer(a0, b0), GcnLayer(a1)])
        s = diffpool_assign(a_hat, h, asg)
        xp, ap = diffpool_apply(s, h, a_hat)
        return _weighted(xp, wx) + _weighted(ap, wa)

    return {"gcn_diffpool": (pooled, [x0, w0, down0, w1, w2])}


def temporal_components(rng) -> dict:
    B, L, c = 2, 4, 3
    grid = rng.normal(size=(B, L, 2))
    boc = rng.random(size=(B, L, 2))
    taxi = rng.normal(size=(B, 1))
    hour, wd, dt = rng.normal(size=(B, L, 1)), rng.normal(size=(B, L, 1)), rng.normal(size=(B, L, 1))
    vg = rng.normal(size=(2,))
    fw, fb = rng.normal(size=(4, 2)), rng.normal(size=(2,))
    d_feat = 2 + 2 + 1 + 3
    k1, k2 = rng.normal(size=(c, d_feat, 3)), rng.normal(size=(c, c, 3))
    k3, k4 = rng.normal(size=(c, c, 3)), rng.normal(size=(c, c, 3))
    down = rng.normal(size=(c, d_feat))
    wout = rng.normal(size=(B, c))

    def stack(g, vgl, fW, fB, c1, c2, c3, c4, dn):
        f = fuse_features(g, Tensor(boc), Tensor(taxi), Tensor(hour), Tensor(wd), Tensor(dt), vgl, fW, fB)
        blocks = [TcnBlock(c1, Tensor(np.zeros(c)), c2, Tensor(np.zeros(c)), 1, 0.0, dn),
                  TcnBlock(c3, Tensor(np.zeros(c)), c4, Tensor(np.zeros(c)), 2, 0.0)]
        return _weighted(tcn_forward(f, blocks), wout)

    return {"temporal_stack": (stack, [grid, vg, fw, fb, k1, k2, k3, k4, down])}


def quantum_layer_components(rng, n=3, layers=2) -> dict:
    d = 4
    xp = rng.normal(size=(n, d)) + 1.0
    ap = rng.random(size=(n, n))
    ap = ap + ap.T
    rot = [rng.uniform(-np.pi, np.pi, (n, 3)) for _ in range(layers)]
    ent = [rng.uniform(-np.pi, np.pi, (n * (n - 1) // 2,)) for _ in range(layers)]
    proj, wout = rng.normal(size=(d, 1)), rng.normal(size=(1, d)) * 0.1
    wq = rng.normal(size=(n, d))
    circ = qgcn_circuit(n, layers)

    def qgcn(x, a, pr, wo, *angles):
        params = QgcnParams(list(angles[:layers]), list(angles[layers:]))
        return _weighted(qgcn_forward(x, a, params, pr, wo, circ), wq)

    dg = 5
    xq = rng.normal(size=(n, d))
    phi = [rng.uniform(-np.pi, np.pi, (n, 3)) for _ in range(layers)]
    emb, raw = rng.normal(size=(d, n)), rng.normal(size=(d, dg))
    m1, b1 = rng.normal(size=(n, 3)), rng.normal(size=(3,)) + 0.5
    m2, b2 = rng.normal(size=(3, dg)), rng.normal(size=(dg,))
    wg = rng.normal(size=(dg,))
    pcirc = qpool_circuit(n, layers)

    def qpool(x, e, r, w1, bb1, w2, bb2, *ph):
        return _weighted(qpool_forward(x, QPoolParams(list(ph), e, r, w1, bb1, w2, bb2), pcirc), wg)

    return {
        "qgcn_layer": (qgcn, [xp, ap, proj, wout] + rot + ent),
        "qpool_layer": (qpool, [xq, emb, raw, m1, b1, m2, b2] + phi),
    }


def circuit_check(circuit, angles) -> dict:
    """Reverse mode vs parameter shift (absolute) and finite differences (relative)."""
    jac = circuit.jacobian(angles)
    shift = parameter_shift_jacobian(circuit, angles)
    fd = finite_difference_jacobian(circuit, angles)
    rot = circuit.rotation_mask
    cry = circuit.ops == 3
    return {
        "shift_err_rot": float(np.max(np.abs(jac[rot] - shift[rot]))) if rot.any() else 0.0,
        "shift_err_cry": float(np.max(np.abs(jac[cry] - shift[cry]))) if cry.any() else 0.0,
        "fd_rel_err": rel_error(jac, fd),
    }


def random_qgcn_angles(rng, n, layers):
    """Gate angles produced by the layer's own assembly from random inputs."""
    xp = Tensor(rng.normal(size=(n, 4)))
    ap = rng.random(size=(n, n))
    params = QgcnParams([Tensor(rng.uniform(-np.pi, np.pi, (n, 3))) for _ in range(layers)],
                        [Tensor(rng.uniform(-np.pi, np.pi, (n * (n - 1) // 2,))) for _ in range(layers)])
    return qgcn_angles(xp, Tensor(ap + ap.T), params, Tensor(rng.normal(size=(4, 1)))).data


def random_qpool_angles(rng, circuit):
    angles = rng.uniform(-np.pi, np.pi, len(circuit))
    angles[circuit.ops == 4] = 0.0
    return angles


def end_to_end_case(rng, n_nodes=6, n_taxis=3, batch=3):
    cfg = tiny_config(seed=int(rng.integers(1 << 30)))
    a_hat = _sym_adj(rng, n_nodes)
    centers = np.column_stack([rng.uniform(-8.7, -8.6, n_nodes), rng.uniform(41.1, 41.2, n_nodes)])
    model = HybridModel(cfg, GraphContext(a_hat, centers))
    params = init_params(cfg, n_nodes, n_taxis)
    L = cfg.seq_len
    b = {
        "grid": rng.integers(0, n_nodes, (batch, L)),
        "boc": rng.dirichlet(np.ones(cfg.k_poi), (batch, L)),
        "taxi": rng.integers(0, n_taxis, batch),
        "hour": rng.integers(0, 24, (batch, L)),
        "weekday": rng.integers(0, 7, (batch, L)),
        "daytype": rng.integers(0, 2, (batch, L)),
        "target": rng.integers(0, n_nodes, batch),
    }
    names = sorted(params)

    def fn(*tensors):
        return model.loss(dict(zip(names, tensors)), b, training=False)

    # zero biases put ReLU inputs exactly on the kink, where FD is meaningless
    return fn, [params[k].data + 0.05 * rng.normal(size=params[k].shape) for k in names]


# suite ------------------------------------------------------------------------


def run_suite(seed=0, qubit_sizes=(2, 3, 4), n_draws=5, inject_fault=False) -> dict:
    """Returns {component: {"error": float, "tol": float, "ok": bool}}."""
    rng = np.random.default_rng(seed)
    fault = 1.01 if inject_fault else 1.0
    results = {}

    def record(name, err, tol):
        results[name] = {"error": float(err), "tol": tol, "ok": bool(err <= tol)}

    for group in (classical_components, graph_components, temporal_components, quantum_layer_components):
        for name, (fn, arrays) in group(rng).items():
            record(name, check_fn(fn, arrays, fault=fault), FD_RTOL)
    fn, arrays = end_to_end_case(rng)
    record("end_to_end", check_fn(fn, arrays, fault=fault), FD_RTOL)

    for n in qubit_sizes:
        qc, pc = qgcn_circuit(n, 2), qpool_circuit(n, 2)
        worst = {"shift_err_rot": 0.0, "shift_err_cry": 0.0, "fd_rel_err": 0.0}
        for circ, maker in ((qc, lambda: random_qgcn_angles(rng, n, 2)), (pc, lambda: random_qpool_angles(rng, pc))):
            for _ in range(n_draws):
                r = circuit_check(circ, maker())
                for k in worst:
                    worst[k] = max(worst[k], r[k])
        record(f"circuit_n{n}_shift", worst["shift_err_rot"] * fault + (fault - 1.0), SHIFT_ATOL)
        record(f"circuit_n{n}_shift_cry", worst["shift_err_cry"], SHIFT_ATOL)
        record(f"circuit_n{n}_fd", worst["fd_rel_err"], FD_RTOL)
    return results
