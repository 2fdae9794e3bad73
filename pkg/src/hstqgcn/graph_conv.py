"""Residual GCN layers and differentiable cluster pooling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


def uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class GcnLayer:
    W: Tensor
    down: Optional[Tensor] = None

    @classmethod
    def init(cls, rng, d_in, d_out):
        W = Tensor(uniform_init(rng, (d_in, d_out), d_in), requires_grad=True)
        down = None
        if d_in != d_out:
            down = Tensor(uniform_init(rng, (d_in, d_out), d_in), requires_grad=True)
        return cls(W, down)


def _as_const(a):
    return a if isinstance(a, Tensor) else Tensor(a)


def gcn_layer_forward(a_hat, h, layer: GcnLayer) -> Tensor:
    """ReLU(Â H W + skip(H)); skip is identity or H @ down."""
    a_hat, h = _as_const(a_hat), _as_const(h)
    n = a_hat.shape[0]
    if a_hat.shape != (n, n) or h.shape[0] != n or h.shape[1] != layer.W.shape[0]:
        raise ShapeError(f"gcn shapes Â={a_hat.shape} H={h.shape} W={layer.W.shape}")
    if layer.down is None:
        if layer.W.shape[0] != layer.W.shape[1]:
            raise ShapeError("width-changing layer needs a downsample map")
        skip = h
    else:
        skip = h @ layer.down
    return ad.relu(a_hat @ (h @ layer.W) + skip)


def gcn_stack(a_hat, x0, layers: Sequence[GcnLayer]) -> Tensor:
    h = _as_const(x0)
    for layer in layers:
        h = gcn_layer_forward(a_hat, h, layer)
    return h


def diffpool_assign(a_hat, x_gcn, assign_W: Tensor) -> Tensor:
    """Row-stochastic assignment S = softmax(Â X W) with no activation before softmax."""
    a_hat, x_gcn = _as_const(a_hat), _as_const(x_gcn)
    if x_gcn.shape[1] != assign_W.shape[0]:
        raise ShapeError(f"assign W {assign_W.shape} vs features {x_gcn.shape}")
    if assign_W.shape[1] > x_gcn.shape[0]:
        raise ShapeError("more clusters than nodes")
    return ad.softmax(a_hat @ (x_gcn @ assign_W), axis=1)


def diffpool_apply(s, x_gcn, a_hat):
    """(Sᵀ X, Sᵀ Â S)."""
    s, x_gcn, a_hat = _as_const(s), _as_const(x_gcn), _as_const(a_hat)
    if s.shape[0] != x_gcn.shape[0] or a_hat.shape != (s.shape[0], s.shape[0]):
        raise ShapeError(f"pool shapes S={s.shape} X={x_gcn.shape} Â={a_hat.shape}")
    st = s.T
    return st @ x_gcn, st @ (a_hat @ s)
