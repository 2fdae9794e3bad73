import numpy as np
import pytest

from hstqgcn.autodiff import ShapeError, Tensor
from hstqgcn.gradcheck import check_fn, temporal_components
from hstqgcn.temporal import (TcnBlock, dilated_causal_conv, fuse_features, receptive_field, tcn_block_forward,
                              tcn_forward)


def _stack(rng, c_in=3, c=4, dilations=(1, 2, 4)):
    blocks, d_in = [], c_in
    for d in dilations:
        b = TcnBlock.init(rng, d_in, c, 3, d)
        # nonzero biases so ReLUs are not all idle at the start of the sequence
        blocks.append(TcnBlock(b.conv1, Tensor(rng.normal(size=c) * 0.1), b.conv2, Tensor(rng.normal(size=c) * 0.1),
                               d, 0.0, b.down))
        d_in = c
    return blocks


def test_conv_examples():
    x = np.array([[1.0, -2.0, 3.0]])
    np.testing.assert_array_equal(dilated_causal_conv(x, np.ones((1, 1, 1))).data, x)
    np.testing.assert_array_equal(dilated_causal_conv(x, np.array([[[0.0, 1.0]]])).data, x)


def test_conv_impulse_is_causal():
    for d in (1, 2, 3):
        x = np.zeros((1, 12))
        x[0, 5] = 1.0
        y = dilated_causal_conv(x, np.ones((1, 1, 3)), dilation=d).data
        assert np.all(y[0, :5] == 0)
        assert set(np.nonzero(y[0])[0]) == {5, 5 + d, 5 + 2 * d} & set(range(12))


def test_block_zero_kernels_passthrough(rng):
    c = 3
    block = TcnBlock(Tensor(np.zeros((c, c, 3))), Tensor(np.zeros(c)), Tensor(np.zeros((c, c, 3))),
                     Tensor(np.zeros(c)), 2, 0.5)
    h = rng.normal(size=(2, c, 6))
    np.testing.assert_array_equal(tcn_block_forward(h, block).data, np.maximum(h, 0))


def test_block_eval_mode_is_deterministic(rng):
    block = TcnBlock.init(rng, 3, 5, 3, 2, dropout=0.4)
    assert block.down is not None and block.down.shape == (5, 3)
    h = rng.normal(size=(2, 3, 7))
    a = tcn_block_forward(h, block, training=False).data
    b = tcn_block_forward(h, block, training=False).data
    assert a.shape == (2, 5, 7) and a.tobytes() == b.tobytes()
    t1 = tcn_block_forward(h, block, training=True, rng=np.random.default_rng(0)).data
    assert not np.array_equal(t1, a)


def test_length_one_sequence(rng):
    blocks = _stack(rng)
    f = rng.normal(size=(2, 3, 1))
    full = tcn_forward(f, blocks).data
    assert full.shape == (2, 4)


def test_causality_exact(rng):
    blocks = _stack(rng)
    f = rng.normal(size=(2, 3, 10))
    for t in range(10):
        g = f.copy()
        g[:, :, t + 1:] = rng.normal(size=g[:, :, t + 1:].shape) * 5
        a = tcn_forward(f[:, :, :t + 1], blocks).data
        b = tcn_forward(g[:, :, :t + 1], blocks).data
        assert a.tobytes() == b.tobytes()
    # appending a future step leaves earlier outputs alone
    h = f
    for blk in blocks:
        h_long = tcn_block_forward(np.concatenate([f, rng.normal(size=(2, 3, 1))], axis=2) if blk is blocks[0]
                                   else h_long, blk)
        h = tcn_block_forward(h, blk)
        np.testing.assert_array_equal(h_long.data[:, :, :10], h.data)
        assert h.shape[2] == 10


def test_receptive_field_is_29(rng):
    assert receptive_field(3, (1, 2, 4)) == 29
    blocks = _stack(rng, c_in=2, c=3)
    L = 40
    f = rng.normal(size=(1, 2, L))
    base = tcn_forward(f, blocks).data
    last = L - 1
    for t in range(L):
        g = f.copy()
        g[:, :, t] += 3.0
        changed = not np.array_equal(tcn_forward(g, blocks).data, base)
        if last - t >= 29:
            assert not changed, t
    # the oldest step inside the field does reach the output
    g = f.copy()
    g[:, :, last - 28] += 3.0
    assert not np.array_equal(tcn_forward(g, blocks).data, base)


def test_fuse_examples(rng):
    B, L, dg, k, dt = 2, 3, 4, 3, 2
    grid = rng.normal(size=(B, L, dg))
    boc = rng.random(size=(B, L, k))
    taxi = rng.normal(size=(B, dt))
    hour, wd, dty = rng.normal(size=(B, L, 2)), rng.normal(size=(B, L, 2)), rng.normal(size=(B, L, 1))
    vg = np.zeros(5)
    fuse_W = np.vstack([np.eye(dg), np.zeros((5, dg))])
    f = fuse_features(grid, boc, taxi, hour, wd, dty, vg, Tensor(fuse_W)).data
    assert f.shape == (B, dg + k + dt + 2 + 2 + 1, L)
    np.testing.assert_array_equal(f[:, :dg, :], grid.transpose(0, 2, 1))
    np.testing.assert_array_equal(f[:, dg + k:dg + k + dt, 0], taxi)
    same = np.repeat(grid[:, :1], L, axis=1)
    f2 = fuse_features(same, np.repeat(boc[:, :1], L, 1), taxi, np.repeat(hour[:, :1], L, 1),
                       np.repeat(wd[:, :1], L, 1), np.repeat(dty[:, :1], L, 1), vg, Tensor(fuse_W)).data
    for t in range(1, L):
        np.testing.assert_array_equal(f2[:, :, t], f2[:, :, 0])
    with pytest.raises(ShapeError):
        fuse_features(grid, boc[:, :2], taxi, hour, wd, dty, vg, Tensor(fuse_W))


def test_fuse_injective_in_grid(rng):
    emb = rng.normal(size=(5, 3))
    W = Tensor(rng.normal(size=(3 + 2, 3)))
    cols = []
    for gid in range(5):
        grid = emb[[gid]][None]  # (1, 1, 3)
        f = fuse_features(grid, np.zeros((1, 1, 2)), np.zeros((1, 1)), np.zeros((1, 1, 1)), np.zeros((1, 1, 1)),
                          np.zeros((1, 1, 1)), np.ones(2), W).data
        cols.append(f[0, :, 0].tobytes())
    assert len(set(cols)) == 5


def test_temporal_stack_gradients():
    fn, arrays = temporal_components(np.random.default_rng(21))["temporal_stack"]
    assert check_fn(fn, arrays) < 1e-4
