"""Dense float64 tensors with reverse-mode differentiation and Adam.

Every op builds its output eagerly and, when any input requires gradients,
links the output to its parents with a closure that maps the output gradient
to input gradients.  ``backward`` walks that graph in reverse topological
order, visiting each node once and summing gradients of reused nodes.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.array(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data.copy()

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise and structural ops


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}") from exc
    return _make(data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a):
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}") from exc
    return _make(data, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape),
                                          _unbroadcast(g * a.data, b.shape)))


def matmul(a, b):
    """Matrix product; leading dimensions broadcast as in ``np.matmul``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(data, (a, b), backward)


def relu(x):
    mask = x.data > 0  # relu'(0) = 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def tanh(x):
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def exp(x):
    y = np.exp(x.data)
    return _make(y, (x,), lambda g: (g * y,))


def softmax(x, axis=-1):
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (x,), backward)


def log_softmax(x, axis=-1):
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    p = np.exp(y)

    def backward(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _make(y, (x,), backward)


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(data, (x,), backward)


def mean(x, axis=None, keepdims=False):
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


def reshape(x, shape):
    data = x.data.reshape(shape)
    return _make(data, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None):
    data = np.transpose(x.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _make(data, (x,), lambda g: (np.transpose(g, inv),))


def index(x, idx):
    """Basic or advanced indexing; repeated indices accumulate in backward."""
    data = x.data[idx]

    def backward(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g)
        return (out,)

    return _make(data, (x,), backward)


def take_rows(table, ids):
    """Embedding lookup: ``table[ids]`` for an integer array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding index out of range [0, {table.shape[0]})")
    return index(table, ids)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(data, tuple(tensors), backward)


def broadcast_to(x, shape):
    data = np.broadcast_to(x.data, shape).copy()
    return _make(data, (x,), lambda g: (_unbroadcast(g, x.shape),))


def dropout(x, rate, rng, training):
    """Inverted dropout; identity when not training or rate == 0."""
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(keep))


def cross_entropy(logits, targets):
    """Mean negative log-likelihood of integer ``targets`` under softmax(logits)."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} incompatible with targets {targets.shape}")
    n_cls = logits.shape[1]
    if targets.size and (targets.min() < 0 or targets.max() >= n_cls):
        raise IndexError(f"target class out of range [0, {n_cls})")
    logp = log_softmax(logits, axis=1)
    picked = index(logp, (np.arange(len(targets)), targets))
    return neg(mean(picked))


def causal_conv1d(x, weight, bias=None, dilation=1):
    """Dilated causal 1-D convolution.

    ``x`` is (B, C_in, L), ``weight`` is (C_out, C_in, k).  The input is
    left-padded with ``(k - 1) * dilation`` zeros; tap ``k - 1`` sits on the
    current step, so output ``t`` only sees inputs ``<= t``.
    """
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv shape mismatch x={x.shape} w={weight.shape}")
    if dilation < 1:
        raise ShapeError("dilation must be >= 1")
    B, C_in, L = x.shape
    C_out, _, k = weight.shape
    pad = (k - 1) * dilation
    xp = np.concatenate([np.zeros((B, C_in, pad)), x.data], axis=2)
    # cols[b, c, j, t] = xp[b, c, t + j * dilation]
    cols = np.stack([xp[:, :, j * dilation: j * dilation + L] for j in range(k)], axis=2)
    data = np.einsum("ocj,bcjt->bot", weight.data, cols)
    parents = (x, weight)
    if bias is not None:
        data = data + bias.data[None, :, None]
        parents = (x, weight, bias)

    def backward(g):
        gw = np.einsum("bot,bcjt->ocj", g, cols)
        gcols = np.einsum("ocj,bot->bcjt", weight.data, g)
        gxp = np.zeros_like(xp)
        for j in range(k):
            gxp[:, :, j * dilation: j * dilation + L] += gcols[:, :, j, :]
        gx = gxp[:, :, pad:]
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2))

    return _make(data, parents, backward)


def custom(data, parents, backward):
    """Register an externally computed op; ``backward`` maps g -> parent grads."""
    return _make(np.asarray(data, dtype=np.float64), tuple(parents), backward)


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss, params=None):
    """Backpropagate from scalar ``loss``.

    Sets ``.grad`` on every reachable tensor that requires gradients.  When
    ``params`` is given, returns their gradients in order, with zeros for
    parameters the loss does not depend on.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    if params is None:
        return None
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


def zero_grad(params):
    for p in params:
        p.grad = None


class Adam:
    """Adam with bias correction; parameters are replaced, never mutated."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        """Return updated copies of ``params`` (a name -> Tensor dict)."""
        if set(params) != set(grads):
            raise ShapeError("params and grads must have the same names")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        out = {}
        for name in params:
            p, g = params[name], np.asarray(grads[name], dtype=np.float64)
            if g.shape != p.shape:
                raise ShapeError(f"grad shape {g.shape} != param shape {p.shape} for {name}")
            m = self.m.get(name, np.zeros_like(p.data))
            v = self.v.get(name, np.zeros_like(p.data))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            new = p.data - self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
            out[name] = Tensor(new, requires_grad=p.requires_grad, name=name)
        return out

    def state_dict(self):
        return {"t": self.t, "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}
