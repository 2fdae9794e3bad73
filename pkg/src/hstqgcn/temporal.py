"""Sequence feature fusion and the dilated causal TCN."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


@dataclass
class TcnBlock:
    conv1: Tensor  # (C_out, C_in, k)
    conv1_b: Tensor
    conv2: Tensor  # (C_out, C_out, k)
    conv2_b: Tensor
    dilation: int
    dropout: float = 0.0
    down: Optional[Tensor] = None  # (C_out, C_in) when C_in != C_out

    @classmethod
    def init(cls, rng, c_in, c_out, kernel_size, dilation, dropout=0.0):
        def w(shape, fan_in):
            b = 1.0 / np.sqrt(fan_in)
            return Tensor(rng.uniform(-b, b, shape), requires_grad=True)

        down = w((c_out, c_in), c_in) if c_in != c_out else None
        return cls(w((c_out, c_in, kernel_size), c_in * kernel_size), Tensor(np.zeros(c_out), requires_grad=True),
                   w((c_out, c_out, kernel_size), c_out * kernel_size), Tensor(np.zeros(c_out), requires_grad=True),
                   dilation, dropout, down)

    @property
    def kernel_size(self):
        return self.conv1.shape[2]


def dilated_causal_conv(h, kernel, dilation=1, bias=None) -> Tensor:
    """Causal convolution for (C, L) or (B, C, L) input; length is preserved."""
    h = ad.as_tensor(h)
    kernel = ad.as_tensor(kernel)
    if h.ndim == 2:
        out = ad.causal_conv1d(ad.reshape(h, (1,) + h.shape), kernel, bias, dilation)
        return ad.reshape(out, out.shape[1:])
    return ad.causal_conv1d(h, kernel, bias, dilation)


def tcn_block_forward(h_prev, block: TcnBlock, training=False, rng=None) -> Tensor:
    """ReLU(drop(ReLU(conv2(drop(ReLU(conv1(h)))))) + residual(h)) on (B, C, L)."""
    h_prev = ad.as_tensor(h_prev)
    if h_prev.ndim != 3 or h_prev.shape[1] != block.conv1.shape[1]:
        raise ShapeError(f"tcn input {h_prev.shape} vs conv {block.conv1.shape}")
    x = ad.relu(ad.causal_conv1d(h_prev, block.conv1, block.conv1_b, block.dilation))
    x = ad.dropout(x, block.dropout, rng, training)
    x = ad.relu(ad.causal_conv1d(x, block.conv2, block.conv2_b, block.dilation))
    x = ad.dropout(x, block.dropout, rng, training)
    if block.down is None:
        res = h_prev
    else:
        res = block.down @ h_prev  # (C_out, C_in) @ (B, C_in, L)
    return ad.relu(x + res)


def tcn_forward(f_seq, blocks: Sequence[TcnBlock], training=False, rng=None) -> Tensor:
    """Run the stack on (B, D, L) and return the last step, shape (B, C_out)."""
    h = ad.as_tensor(f_seq)
    squeeze = h.ndim == 2
    if squeeze:
        h = ad.reshape(h, (1,) + h.shape)
    for block in blocks:
        h = tcn_block_forward(h, block, training, rng)
    last = h[:, :, -1]
    return ad.reshape(last, (last.shape[1],)) if squeeze else last


def receptive_field(kernel_size, dilations, convs_per_block=2):
    return 1 + convs_per_block * (kernel_size - 1) * int(np.sum(dilations))


def fuse_features(grid_emb, boc, taxi_emb, hour_emb, weekday_emb, daytype_emb, v_global, fuse_W, fuse_b=None):
    """Assemble F_seq, shape (B, D_feature, L).

    Grid-like inputs are (B, L, ·) rows already looked up; ``taxi_emb`` is
    (B, D_taxi) and repeated over steps.  ``v_global`` is shared by every step:
    E'_grid = [E_grid ‖ V_global] @ fuse_W (+ fuse_b).
    """
    grid_emb = ad.as_tensor(grid_emb)
    B, L, _ = grid_emb.shape
    vg = ad.broadcast_to(ad.reshape(ad.as_tensor(v_global), (1, 1, -1)), (B, L, v_global.shape[-1]))
    e_grid = ad.concat([grid_emb, vg], axis=2) @ fuse_W
    if fuse_b is not None:
        e_grid = e_grid + fuse_b
    taxi = ad.broadcast_to(ad.reshape(ad.as_tensor(taxi_emb), (B, 1, -1)), (B, L, taxi_emb.shape[-1]))
    cols = [e_grid, ad.as_tensor(boc), taxi, ad.as_tensor(hour_emb), ad.as_tensor(weekday_emb), ad.as_tensor(daytype_emb)]
    for c in cols:
        if c.shape[:2] != (B, L):
            raise ShapeError(f"feature block {c.shape} does not match (B, L) = {(B, L)}")
    return ad.transpose(ad.concat(cols, axis=2), (0, 2, 1))
