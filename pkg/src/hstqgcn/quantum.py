"""Statevector simulation of the graph-convolution and pooling circuits.

Rotations follow R_A(θ) = exp(-iθA/2).  A circuit is an ordered gate list;
its angles are supplied per gate at run time, so the same structure is reused
across training steps and each gate angle gets its own gradient slot.
Gradients run backward through the statevector (adjoint method); the
parameter-shift rule is kept as an independent check.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import List

import numpy as np

from . import _kernels
from . import autodiff as ad
from ._kernels import OP_CNOT, OP_CRY, OP_NAMES, OP_RX, OP_RY, OP_RZ
from .autodiff import ShapeError, Tensor

_AXES = {"X": OP_RX, "Y": OP_RY, "Z": OP_RZ}


# ---------------------------------------------------------------------------
# single-gate state API


def zero_state(n_qubits: int) -> np.ndarray:
    if n_qubits < 1:
        raise ValueError("need at least one qubit")
    state = np.zeros(1 << n_qubits, dtype=np.complex128)
    state[0] = 1.0
    return state


def _n_qubits(state) -> int:
    n = int(state.shape[0]).bit_length() - 1
    if state.ndim != 1 or (1 << n) != state.shape[0]:
        raise ShapeError(f"state length {state.shape} is not a power of two")
    return n


def _check_wire(q, n):
    if not 0 <= q < n:
        raise IndexError(f"qubit {q} out of range for {n} qubits")


def apply_rotation(state, axis: str, theta: float, qubit: int) -> np.ndarray:
    n = _n_qubits(state)
    _check_wire(qubit, n)
    return _kernels._np_apply_gate(np.asarray(state, dtype=np.complex128), n, _AXES[axis.upper()], qubit, 0, theta)


def apply_cry(state, theta: float, control: int, target: int) -> np.ndarray:
    n = _n_qubits(state)
    _check_wire(control, n)
    _check_wire(target, n)
    if control == target:
        raise IndexError("control and target must differ")
    return _kernels._np_apply_gate(np.asarray(state, dtype=np.complex128), n, OP_CRY, control, target, theta)


def apply_cnot(state, control: int, target: int) -> np.ndarray:
    n = _n_qubits(state)
    _check_wire(control, n)
    _check_wire(target, n)
    if control == target:
        raise IndexError("control and target must differ")
    return _kernels._np_apply_gate(np.asarray(state, dtype=np.complex128), n, OP_CNOT, control, target, 0.0)


def angle_encode(x) -> np.ndarray:
    """Product state ⊗_i R_Y(x_i) R_Z(x_i)|0⟩ (R_Z acts first)."""
    x = np.asarray(x, dtype=np.float64)
    state = zero_state(len(x))
    for i, xi in enumerate(x):
        state = apply_rotation(state, "Z", xi, i)
        state = apply_rotation(state, "Y", xi, i)
    return state


def pauli_z_expectation(state, qubit: int) -> float:
    n = _n_qubits(state)
    _check_wire(qubit, n)
    probs = np.abs(state.reshape(1 << qubit, 2, -1)) ** 2
    return float(probs[:, 0, :].sum() - probs[:, 1, :].sum())


# ---------------------------------------------------------------------------
# circuits


@dataclass
class Circuit:
    n_qubits: int
    ops: np.ndarray
    wire_a: np.ndarray
    wire_b: np.ndarray
    labels: List[str] = field(default_factory=list)

    @classmethod
    def from_gates(cls, n_qubits, gates):
        """``gates`` is a list of (opcode, wire_a, wire_b, label)."""
        ops = np.array([g[0] for g in gates], dtype=np.int64)
        wa = np.array([g[1] for g in gates], dtype=np.int64)
        wb = np.array([g[2] for g in gates], dtype=np.int64)
        return cls(n_qubits, ops, wa, wb, [g[3] for g in gates])

    def __len__(self):
        return len(self.ops)

    @property
    def rotation_mask(self):
        """Gates whose angle obeys the two-term shift rule."""
        return (self.ops == OP_RX) | (self.ops == OP_RY) | (self.ops == OP_RZ)

    def _angles(self, angles):
        a = np.ascontiguousarray(angles, dtype=np.float64)
        if a.shape != (len(self),):
            raise ShapeError(f"expected {len(self)} gate angles, got {a.shape}")
        return a

    def run(self, angles, track_norm=False, kernels=None):
        k = kernels or _kernels.active
        state, worst = k.simulate(self.ops, self.wire_a, self.wire_b, self._angles(angles), self.n_qubits, track_norm)
        return (state, worst) if track_norm else state

    def expvals(self, angles, kernels=None) -> np.ndarray:
        k = kernels or _kernels.active
        return k.z_expectations(self.run(angles, kernels=k), self.n_qubits)

    def expvals_batch(self, angle_rows, kernels=None) -> np.ndarray:
        k = kernels or _kernels.active
        rows = np.ascontiguousarray(angle_rows, dtype=np.float64)
        return k.simulate_batch(self.ops, self.wire_a, self.wire_b, rows, self.n_qubits)

    def vjp(self, angles, state, gz, kernels=None) -> np.ndarray:
        """Gradient of Σ_i gz_i ⟨Z_i⟩ with respect to every gate angle."""
        k = kernels or _kernels.active
        return k.adjoint_grad(self.ops, self.wire_a, self.wire_b, self._angles(angles), self.n_qubits,
                              state, np.ascontiguousarray(gz, dtype=np.float64))

    def jacobian(self, angles, kernels=None) -> np.ndarray:
        """(n_gates, n_qubits) matrix of d⟨Z_i⟩/dθ_k via reverse mode."""
        state = self.run(angles, kernels=kernels)
        eye = np.eye(self.n_qubits)
        return np.stack([self.vjp(angles, state, eye[i], kernels=kernels) for i in range(self.n_qubits)], axis=1)

    def dump(self, angles=None) -> list:
        angles = np.zeros(len(self)) if angles is None else self._angles(angles)
        out = []
        for k in range(len(self)):
            op = int(self.ops[k])
            wires = [int(self.wire_a[k])] if op in (OP_RX, OP_RY, OP_RZ) else [int(self.wire_a[k]), int(self.wire_b[k])]
            entry = {"index": k, "gate": OP_NAMES[op], "wires": wires}
            if op != OP_CNOT:
                entry["angle"] = float(angles[k])
            if self.labels:
                entry["param"] = self.labels[k]
            out.append(entry)
        return out

    def dump_json(self, angles=None) -> str:
        return json.dumps({"n_qubits": self.n_qubits, "gates": self.dump(angles)}, indent=1)


def qgcn_circuit(n_qubits: int, n_layers: int) -> Circuit:
    """Angle encoding, then per layer: RX·RY·RZ on every qubit and CRY on all pairs i<j."""
    gates = []
    for i in range(n_qubits):
        gates.append((OP_RZ, i, 0, f"enc.{i}"))
        gates.append((OP_RY, i, 0, f"enc.{i}"))
    for layer in range(n_layers):
        for i in range(n_qubits):
            for a, op in enumerate((OP_RX, OP_RY, OP_RZ)):
                gates.append((op, i, 0, f"qgcn.{layer}.rot[{i},{a}]"))
        for p, (i, j) in enumerate(combinations(range(n_qubits), 2)):
            gates.append((OP_CRY, i, j, f"qgcn.{layer}.ent[{p}]"))
    return Circuit.from_gates(n_qubits, gates)


def ring_pairs(n_qubits):
    if n_qubits < 2:
        return []
    return [(i, (i + 1) % n_qubits) for i in range(n_qubits)]


def qpool_circuit(n_qubits: int, n_layers: int) -> Circuit:
    """R_Y embedding, then per layer: RZ·RY·RZ on every qubit and a CNOT ring."""
    gates = [(OP_RY, i, 0, f"embed.{i}") for i in range(n_qubits)]
    for layer in range(n_layers):
        for i in range(n_qubits):
            for a, op in enumerate((OP_RZ, OP_RY, OP_RZ)):
                gates.append((op, i, 0, f"qpool.{layer}.phi[{i},{a}]"))
        for c, t in ring_pairs(n_qubits):
            gates.append((OP_CNOT, c, t, ""))
    return Circuit.from_gates(n_qubits, gates)


def expval_z(circuit: Circuit, angles: Tensor) -> Tensor:
    """Differentiable ⟨Z_i⟩ readout of ``circuit`` for per-gate ``angles``."""
    a = angles.data
    state = circuit.run(a)
    z = _kernels.active.z_expectations(state, circuit.n_qubits)

    def backward(g):
        return (circuit.vjp(a, state, g),)

    return ad.custom(z, (angles,), backward)


# ---------------------------------------------------------------------------
# reference gradients


def parameter_shift_jacobian(circuit: Circuit, angles, kernels=None) -> np.ndarray:
    """d⟨Z_i⟩/dθ_k from shifted circuit evaluations.

    Single-qubit rotations use the two-term rule with shifts ±π/2.  CRY has
    generator eigenvalues {0, ±1/2} and uses the four-term rule with shifts
    ±π/2 and ±3π/2.  CNOT rows are zero.
    """
    angles = np.asarray(angles, dtype=np.float64)
    n_g = len(circuit)
    ops = circuit.ops
    shifts = {OP_RX: [(np.pi / 2, 0.5), (-np.pi / 2, -0.5)]}
    shifts[OP_RY] = shifts[OP_RZ] = shifts[OP_RX]
    cp = (np.sqrt(2) + 1) / (4 * np.sqrt(2))
    cm = (np.sqrt(2) - 1) / (4 * np.sqrt(2))
    shifts[OP_CRY] = [(np.pi / 2, cp), (-np.pi / 2, -cp), (3 * np.pi / 2, -cm), (-3 * np.pi / 2, cm)]
    rows, plan = [], []
    for k in range(n_g):
        for s, coef in shifts.get(int(ops[k]), []):
            shifted = angles.copy()
            shifted[k] += s
            rows.append(shifted)
            plan.append((k, coef))
    jac = np.zeros((n_g, circuit.n_qubits))
    if rows:
        vals = circuit.expvals_batch(np.array(rows), kernels=kernels)
        for (k, coef), v in zip(plan, vals):
            jac[k] += coef * v
    return jac


def finite_difference_jacobian(circuit: Circuit, angles, h=1e-5, kernels=None) -> np.ndarray:
    angles = np.asarray(angles, dtype=np.float64)
    n_g = len(circuit)
    rows = np.repeat(angles[None, :], 2 * n_g, axis=0)
    rows[np.arange(n_g) * 2, np.arange(n_g)] += h
    rows[np.arange(n_g) * 2 + 1, np.arange(n_g)] -= h
    vals = circuit.expvals_batch(rows, kernels=kernels)
    return (vals[0::2] - vals[1::2]) / (2 * h)


# ---------------------------------------------------------------------------
# model blocks


@dataclass
class QgcnParams:
    rot: List[Tensor]  # per layer (n_qubits, 3): RX, RY, RZ angles
    ent: List[Tensor]  # per layer (n_pairs,): CRY couplings for pairs i<j

    @property
    def n_layers(self):
        return len(self.rot)

    @classmethod
    def init(cls, rng, n_qubits, n_layers, scale=0.1):
        n_pairs = n_qubits * (n_qubits - 1) // 2
        rot = [Tensor(rng.uniform(-scale, scale, (n_qubits, 3)), requires_grad=True) for _ in range(n_layers)]
        ent = [Tensor(rng.uniform(-scale, scale, (n_pairs,)), requires_grad=True) for _ in range(n_layers)]
        return cls(rot, ent)


@dataclass
class QPoolParams:
    phi: List[Tensor]  # per layer (n_qubits, 3): RZ, RY, RZ angles
    embed_W: Tensor  # (D_hidden, n_qubits)
    raw_W: Tensor  # (D_hidden, D_global)
    mlp_W1: Tensor  # (n_qubits, H)
    mlp_b1: Tensor
    mlp_W2: Tensor  # (H, D_global)
    mlp_b2: Tensor

    @property
    def n_layers(self):
        return len(self.phi)


def qgcn_angles(x_pooled: Tensor, a_pooled: Tensor, params: QgcnParams, proj: Tensor) -> Tensor:
    """Per-gate angle vector for ``qgcn_circuit``."""
    n = x_pooled.shape[0]
    if a_pooled.shape != (n, n) or proj.shape != (x_pooled.shape[1], 1):
        raise ShapeError(f"qgcn shapes X={x_pooled.shape} A={a_pooled.shape} proj={proj.shape}")
    x = ad.reshape(ad.mul(ad.tanh(x_pooled @ proj), np.pi), (n,))
    parts = [ad.index(x, np.repeat(np.arange(n), 2))]
    iu, ju = np.triu_indices(n, k=1)
    coupling = ad.index(a_pooled, (iu, ju))
    for rot, ent in zip(params.rot, params.ent):
        if rot.shape != (n, 3) or ent.shape != (len(iu),):
            raise ShapeError("qgcn parameter shapes do not match qubit count")
        parts.append(ad.reshape(rot, (3 * n,)))
        parts.append(ad.mul(ent, coupling))
    return ad.concat(parts, axis=0)


def qgcn_forward(x_pooled, a_pooled, params: QgcnParams, proj: Tensor, W_out: Tensor, circuit=None) -> Tensor:
    """ReLU(z_i · W_out + X_pooled[i]) with z the circuit's ⟨Z⟩ readout."""
    x_pooled = ad.as_tensor(x_pooled)
    a_pooled = ad.as_tensor(a_pooled)
    n, d = x_pooled.shape
    if W_out.shape != (1, d):
        raise ShapeError(f"W_out must be (1, {d}), got {W_out.shape}")
    circuit = circuit or qgcn_circuit(n, params.n_layers)
    z = expval_z(circuit, qgcn_angles(x_pooled, a_pooled, params, proj))
    return ad.relu(ad.reshape(z, (n, 1)) @ W_out + x_pooled)


def qpool_angles(x_mean: Tensor, params: QPoolParams) -> Tensor:
    n = params.embed_W.shape[1]
    parts = [ad.reshape(ad.reshape(x_mean, (1, -1)) @ params.embed_W, (n,))]
    n_ring = len(ring_pairs(n))
    for phi in params.phi:
        if phi.shape != (n, 3):
            raise ShapeError("qpool parameter shapes do not match qubit count")
        parts.append(ad.reshape(phi, (3 * n,)))
        if n_ring:
            parts.append(Tensor(np.zeros(n_ring)))
    return ad.concat(parts, axis=0)


def qpool_forward(x_qgcn, params: QPoolParams, circuit=None, return_parts=False):
    """Global vector V_raw + MLP(⟨Z⟩ readout of the pooling circuit)."""
    x_qgcn = ad.as_tensor(x_qgcn)
    if x_qgcn.shape[1] != params.embed_W.shape[0]:
        raise ShapeError(f"features {x_qgcn.shape} vs embed_W {params.embed_W.shape}")
    n = params.embed_W.shape[1]
    circuit = circuit or qpool_circuit(n, params.n_layers)
    x_mean = ad.mean(x_qgcn, axis=0)
    v_raw = ad.reshape(ad.reshape(x_mean, (1, -1)) @ params.raw_W, (-1,))
    z = expval_z(circuit, qpool_angles(x_mean, params))
    hidden = ad.relu(ad.reshape(z, (1, n)) @ params.mlp_W1 + params.mlp_b1)
    mlp = ad.reshape(hidden @ params.mlp_W2 + params.mlp_b2, (-1,))
    v_global = v_raw + mlp
    if return_parts:
        return v_global, {"v_raw": v_raw, "x_qpool": z, "mlp": mlp}
    return v_global
