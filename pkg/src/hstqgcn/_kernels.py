"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Circuits are passed as flat arrays (opcode, wire_a, wire_b, angle) so a whole
simulation runs inside one compiled call.  Set ``HSTQGCN_DISABLE_NUMBA=1`` to
force the numpy path; both paths are always importable as ``numpy_kernels``
and ``numba_kernels`` (the latter is ``None`` when numba is missing).

Qubit ``q`` of an ``n``-qubit register is bit ``n - 1 - q`` of the basis index.
"""
import os
from types import SimpleNamespace

import numpy as np

OP_RX, OP_RY, OP_RZ, OP_CRY, OP_CNOT = 0, 1, 2, 3, 4
OP_NAMES = ("RX", "RY", "RZ", "CRY", "CNOT")


def _flag(name):
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


# ---------------------------------------------------------------------------
# shared scalar helpers (plain python, compiled again by numba below)


def _rot_matrix(op, theta):
    c = np.cos(theta / 2.0)
    s = np.sin(theta / 2.0)
    m = np.zeros((2, 2), dtype=np.complex128)
    if op == OP_RX:
        m[0, 0] = c
        m[0, 1] = -1j * s
        m[1, 0] = -1j * s
        m[1, 1] = c
    elif op == OP_RY or op == OP_CRY:
        m[0, 0] = c
        m[0, 1] = -s
        m[1, 0] = s
        m[1, 1] = c
    else:
        m[0, 0] = np.exp(-0.5j * theta)
        m[1, 1] = np.exp(0.5j * theta)
    return m


def _rot_derivative(op, theta):
    # d/dtheta exp(-i theta G / 2) = -i/2 G R(theta)
    m = _rot_matrix(op, theta)
    d = np.zeros((2, 2), dtype=np.complex128)
    if op == OP_RX:
        d[0, 0] = m[1, 0]
        d[0, 1] = m[1, 1]
        d[1, 0] = m[0, 0]
        d[1, 1] = m[0, 1]
    elif op == OP_RY or op == OP_CRY:
        d[0, 0] = -1j * m[1, 0]
        d[0, 1] = -1j * m[1, 1]
        d[1, 0] = 1j * m[0, 0]
        d[1, 1] = 1j * m[0, 1]
    else:
        d[0, 0] = m[0, 0]
        d[1, 1] = -m[1, 1]
    for i in range(2):
        for j in range(2):
            d[i, j] = -0.5j * d[i, j]
    return d


# the numpy path keeps its own references; numba rebinds the module names
_py_rot_matrix = _rot_matrix
_py_rot_derivative = _rot_derivative


# ---------------------------------------------------------------------------
# loop kernels: the numba path (run uncompiled they are correct but slow)


def _lp_apply_1q(state, n, q, m):
    stride = 1 << (n - 1 - q)
    for i in range(state.shape[0]):
        if i & stride == 0:
            j = i | stride
            a0 = state[i]
            a1 = state[j]
            state[i] = m[0, 0] * a0 + m[0, 1] * a1
            state[j] = m[1, 0] * a0 + m[1, 1] * a1


def _lp_apply_c1q(state, n, c, t, m):
    cbit = 1 << (n - 1 - c)
    stride = 1 << (n - 1 - t)
    for i in range(state.shape[0]):
        if (i & cbit) != 0 and (i & stride) == 0:
            j = i | stride
            a0 = state[i]
            a1 = state[j]
            state[i] = m[0, 0] * a0 + m[0, 1] * a1
            state[j] = m[1, 0] * a0 + m[1, 1] * a1


def _lp_apply_cnot(state, n, c, t):
    cbit = 1 << (n - 1 - c)
    stride = 1 << (n - 1 - t)
    for i in range(state.shape[0]):
        if (i & cbit) != 0 and (i & stride) == 0:
            j = i | stride
            tmp = state[i]
            state[i] = state[j]
            state[j] = tmp


def _lp_apply_gate(state, n, op, a, b, theta, inverse):
    if op == OP_CNOT:
        _lp_apply_cnot(state, n, a, b)
        return
    m = _rot_matrix(op, -theta if inverse else theta)
    if op == OP_CRY:
        _lp_apply_c1q(state, n, a, b, m)
    else:
        _lp_apply_1q(state, n, a, m)


def _lp_norm_dev(state):
    acc = 0.0
    for i in range(state.shape[0]):
        acc += state[i].real * state[i].real + state[i].imag * state[i].imag
    return abs(np.sqrt(acc) - 1.0)


def _lp_simulate(ops, wa, wb, angles, n, track_norm):
    state = np.zeros(1 << n, dtype=np.complex128)
    state[0] = 1.0
    worst = 0.0
    for k in range(ops.shape[0]):
        _lp_apply_gate(state, n, ops[k], wa[k], wb[k], angles[k], False)
        if track_norm:
            dev = _lp_norm_dev(state)
            if dev > worst:
                worst = dev
    return state, worst


def _lp_z_expectations(state, n):
    out = np.zeros(n)
    for i in range(state.shape[0]):
        p = state[i].real * state[i].real + state[i].imag * state[i].imag
        for q in range(n):
            if (i >> (n - 1 - q)) & 1:
                out[q] -= p
            else:
                out[q] += p
    return out


def _lp_simulate_batch(ops, wa, wb, angle_rows, n):
    out = np.zeros((angle_rows.shape[0], n))
    for r in range(angle_rows.shape[0]):
        state, _ = _lp_simulate(ops, wa, wb, angle_rows[r], n, False)
        out[r] = _lp_z_expectations(state, n)
    return out


def _lp_adjoint_grad(ops, wa, wb, angles, n, state, gz):
    dim = state.shape[0]
    psi = state.copy()
    lam = np.empty(dim, dtype=np.complex128)
    for i in range(dim):
        w = 0.0
        for q in range(n):
            if (i >> (n - 1 - q)) & 1:
                w -= gz[q]
            else:
                w += gz[q]
        lam[i] = w * psi[i]
    grad = np.zeros(ops.shape[0])
    mu = np.empty(dim, dtype=np.complex128)
    for k in range(ops.shape[0] - 1, -1, -1):
        op = ops[k]
        _lp_apply_gate(psi, n, op, wa[k], wb[k], angles[k], True)
        if op != OP_CNOT:
            d = _rot_derivative(op, angles[k])
            for i in range(dim):
                mu[i] = psi[i]
            if op == OP_CRY:
                cbit = 1 << (n - 1 - wa[k])
                for i in range(dim):
                    if (i & cbit) == 0:
                        mu[i] = 0.0
                _lp_apply_c1q(mu, n, wa[k], wb[k], d)
            else:
                _lp_apply_1q(mu, n, wa[k], d)
            acc = 0.0
            for i in range(dim):
                acc += lam[i].real * mu[i].real + lam[i].imag * mu[i].imag
            grad[k] = 2.0 * acc
        _lp_apply_gate(lam, n, op, wa[k], wb[k], angles[k], True)
    return grad


def _lp_pairwise_haversine(lon, lat, radius):
    n = lon.shape[0]
    out = np.zeros((n, n))
    # convert before subtracting, in the same order as the scalar haversine, so
    # threshold tests agree with it bit for bit at exact ties
    lon = np.radians(lon)
    lat = np.radians(lat)
    for i in range(n):
        for j in range(i + 1, n):
            dlat = lat[i] - lat[j]
            dlon = lon[i] - lon[j]
            a = np.sin(dlat / 2.0) ** 2 + np.cos(lat[i]) * np.cos(lat[j]) * np.sin(dlon / 2.0) ** 2
            d = 2.0 * radius * np.arcsin(np.sqrt(min(a, 1.0)))
            out[i, j] = d
            out[j, i] = d
    return out


# ---------------------------------------------------------------------------
# numpy path: vectorized per gate, python loop over gates


def _np_apply_1q(state, n, q, m):
    psi = state.reshape(1 << q, 2, 1 << (n - 1 - q))
    return np.einsum("ab,ibj->iaj", m, psi).reshape(-1)


def _np_apply_c1q(state, n, c, t, m):
    psi = state.reshape((2,) * n).copy()
    idx = [slice(None)] * n
    idx[c] = 1
    sub = psi[tuple(idx)]
    axis = t if t < c else t - 1
    sub = np.moveaxis(np.tensordot(m, sub, axes=([1], [axis])), 0, axis)
    psi[tuple(idx)] = sub
    return psi.reshape(-1)


def _np_apply_cnot(state, n, c, t):
    psi = state.reshape((2,) * n).copy()
    idx = [slice(None)] * n
    idx[c] = 1
    sub = psi[tuple(idx)]
    axis = t if t < c else t - 1
    psi[tuple(idx)] = np.flip(sub, axis=axis)
    return psi.reshape(-1)


def _np_apply_gate(state, n, op, a, b, theta, inverse=False):
    if op == OP_CNOT:
        return _np_apply_cnot(state, n, a, b)
    m = _py_rot_matrix(op, -theta if inverse else theta)
    if op == OP_CRY:
        return _np_apply_c1q(state, n, a, b, m)
    return _np_apply_1q(state, n, a, m)


def _z_signs(n):
    idx = np.arange(1 << n)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    return 1.0 - 2.0 * bits


def _np_simulate(ops, wa, wb, angles, n, track_norm):
    state = np.zeros(1 << n, dtype=np.complex128)
    state[0] = 1.0
    worst = 0.0
    for k in range(len(ops)):
        state = _np_apply_gate(state, n, ops[k], wa[k], wb[k], angles[k])
        if track_norm:
            worst = max(worst, abs(np.linalg.norm(state) - 1.0))
    return state, worst


def _np_z_expectations(state, n):
    return (np.abs(state) ** 2) @ _z_signs(n)


def _np_simulate_batch(ops, wa, wb, angle_rows, n):
    out = np.zeros((angle_rows.shape[0], n))
    for r in range(angle_rows.shape[0]):
        state, _ = _np_simulate(ops, wa, wb, angle_rows[r], n, False)
        out[r] = _np_z_expectations(state, n)
    return out


def _np_adjoint_grad(ops, wa, wb, angles, n, state, gz):
    psi = state.copy()
    lam = (_z_signs(n) @ gz) * psi
    grad = np.zeros(len(ops))
    for k in range(len(ops) - 1, -1, -1):
        op = ops[k]
        psi = _np_apply_gate(psi, n, op, wa[k], wb[k], angles[k], inverse=True)
        if op != OP_CNOT:
            d = _py_rot_derivative(op, angles[k])
            if op == OP_CRY:
                mu = psi.reshape((2,) * n).copy()
                idx = [slice(None)] * n
                idx[wa[k]] = 0
                mu[tuple(idx)] = 0.0
                mu = _np_apply_c1q(mu.reshape(-1), n, wa[k], wb[k], d)
            else:
                mu = _np_apply_1q(psi, n, wa[k], d)
            grad[k] = 2.0 * np.real(np.vdot(lam, mu))
        lam = _np_apply_gate(lam, n, op, wa[k], wb[k], angles[k], inverse=True)
    return grad


def _np_pairwise_haversine(lon, lat, radius):
    lon = np.radians(lon)
    lat = np.radians(lat)
    dlat = lat[:, None] - lat[None, :]
    dlon = lon[:, None] - lon[None, :]
    a = np.sin(dlat / 2.0) ** 2 + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(dlon / 2.0) ** 2
    out = 2.0 * radius * np.arcsin(np.sqrt(np.minimum(a, 1.0)))
    np.fill_diagonal(out, 0.0)
    return out


numpy_kernels = SimpleNamespace(
    name="numpy",
    simulate=_np_simulate,
    simulate_batch=_np_simulate_batch,
    z_expectations=_np_z_expectations,
    adjoint_grad=_np_adjoint_grad,
    pairwise_haversine=_np_pairwise_haversine,
)


def _build_numba():
    try:
        import numba
    except ImportError:
        return None
    jit = numba.njit(cache=True)
    # helpers must be compiled before the kernels that call them
    g = globals()
    for name in ("_rot_matrix", "_rot_derivative", "_lp_apply_1q",
                 "_lp_apply_c1q", "_lp_apply_cnot", "_lp_apply_gate", "_lp_norm_dev",
                 "_lp_simulate", "_lp_z_expectations", "_lp_simulate_batch",
                 "_lp_adjoint_grad", "_lp_pairwise_haversine"):
        g[name] = jit(g[name])
    return SimpleNamespace(
        name="numba",
        simulate=g["_lp_simulate"],
        simulate_batch=g["_lp_simulate_batch"],
        z_expectations=g["_lp_z_expectations"],
        adjoint_grad=g["_lp_adjoint_grad"],
        pairwise_haversine=g["_lp_pairwise_haversine"],
    )


# python-level references to the uncompiled loop kernels, kept for tests
loop_kernels = SimpleNamespace(
    name="loops",
    simulate=_lp_simulate,
    simulate_batch=_lp_simulate_batch,
    z_expectations=_lp_z_expectations,
    adjoint_grad=_lp_adjoint_grad,
    pairwise_haversine=_lp_pairwise_haversine,
)

numba_kernels = None if _flag("HSTQGCN_DISABLE_NUMBA") else _build_numba()

active = numba_kernels if numba_kernels is not None else numpy_kernels


def backend_name():
    return active.name
