"""Dense-matrix reference simulator used as an independent oracle in tests.

Every gate is materialized as a full 2^n x 2^n unitary (rotations through
scipy's matrix exponential) and applied by matrix-vector products, so it
shares no code path with the strided kernels in ``qmlbk.simulator``.
"""

from functools import reduce

import numpy as np
from scipy.linalg import expm

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
FIXED = {"H": HADAMARD, "X": PAULI["X"], "Y": PAULI["Y"], "Z": PAULI["Z"], "CNOT": PAULI["X"], "CZ": PAULI["Z"]}
AXIS = {"RX": "X", "RY": "Y", "RZ": "Z"}


def kron_all(mats):
    return reduce(np.kron, mats, np.eye(1, dtype=complex))


def embed(ops: dict, n: int) -> np.ndarray:
    """Tensor product with ops[q] on qubit q (qubit 0 most significant) and identity elsewhere."""
    return kron_all([ops.get(q, PAULI["I"]) for q in range(n)])


def gate_unitary(gate, angle, n: int) -> np.ndarray:
    if gate.kind in AXIS:
        local = {gate.targets[0]: expm(-0.5j * angle * PAULI[AXIS[gate.kind]])}
    elif gate.kind == "PAULI":
        P = embed({q: PAULI[ch] for q, ch in zip(gate.targets, gate.pauli)}, n)
        U = expm(-0.5j * angle * P)
        return _controlled(U, gate.controls, n)
    else:
        local = {gate.targets[0]: FIXED[gate.kind]}
    return _controlled(embed(local, n), gate.controls, n)


def _controlled(U, controls, n):
    if not controls:
        return U
    one = np.array([[0, 0], [0, 1]], dtype=complex)
    P = embed({c: one for c in controls}, n)
    return np.eye(1 << n) - P + P @ U


def run(circuit, params, data) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    data = np.asarray(data, dtype=float).reshape(1, -1)
    n = circuit.num_qubits
    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = 1
    for g in circuit.gates:
        angle = None
        if g.angle is not None:
            angle = float(np.asarray(g.angle.bind(params, data)).reshape(-1)[0])
        psi = gate_unitary(g, angle, n) @ psi
    return psi


def observable_matrix(obs) -> np.ndarray:
    n = obs.num_qubits
    M = sum(w * kron_all([PAULI[ch] for ch in p]) for w, p in obs.terms)
    M = np.zeros((1 << n, 1 << n), dtype=complex) + M
    if obs.projector:
        proj = {q: np.diag([1.0, 0.0]) if b == 0 else np.diag([0.0, 1.0]) for q, b in obs.projector}
        M = M @ embed({q: m.astype(complex) for q, m in proj.items()}, n)
    return obs.scale * M


def expect(psi, obs) -> float:
    return float(np.real(np.vdot(psi, observable_matrix(obs) @ psi)))
