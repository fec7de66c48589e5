"""Exact statevector simulation.

Qubit 0 is the most significant bit of the basis index, so ``|10>`` on two
qubits is amplitude index 2. States are held as complex128 arrays; the batched
entry points work on arrays of shape ``(batch, 2**n)`` so that one circuit can
be pushed through many data points at once.

Gates act in place on a ``(batch, 2, ..., 2)`` view of the amplitude array.
Controls are resolved by basic indexing into that view, so no ``2**n x 2**n``
matrix is ever built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 22

GATE_KINDS = ("H", "X", "Y", "Z", "RX", "RY", "RZ", "CNOT", "CZ", "PAULI")
ROTATION_KINDS = ("RX", "RY", "RZ", "PAULI")
ANGLE_SOURCES = ("const", "param", "data")
PAULI_LETTERS = "IXYZ"


class SimulatorError(ValueError):
    """Invalid circuit, state or observable."""


class CapacityError(SimulatorError):
    """Circuit exceeds the desk-scale qubit budget."""


@dataclass(frozen=True)
class Angle:
    """Recipe for a rotation angle.

    ``const``: ``offset``.
    ``param``: ``scale * params[index[0]] + offset``.
    ``data``:  ``scale * prod(data[i] for i in index) + offset``.

    If ``bit = (j, p)`` is set, the affine value ``v`` is reduced to the
    fraction ``(v / period) mod 1``, rounded to ``p`` bits, and the angle is
    ``pi`` times its ``j``-th most significant bit (``j`` is 1-based).
    """

    source: str
    index: tuple[int, ...] = ()
    scale: float = 1.0
    offset: float = 0.0
    bit: tuple[int, int] | None = None
    period: float = 1.0

    def __post_init__(self):
        if self.source not in ANGLE_SOURCES:
            raise SimulatorError(f"unknown angle source {self.source!r}")
        object.__setattr__(self, "index", tuple(int(i) for i in self.index))
        if self.source == "const" and self.index:
            raise SimulatorError("constant angle takes no slot index")
        if self.source == "param" and len(self.index) != 1:
            raise SimulatorError("parameter angle needs exactly one slot")
        if self.source == "data" and not self.index:
            raise SimulatorError("data angle needs at least one slot")
        if self.bit is not None:
            j, p = (int(b) for b in self.bit)
            if not 1 <= j <= p:
                raise SimulatorError(f"bit position {j} outside 1..{p}")
            object.__setattr__(self, "bit", (j, p))
            if self.period <= 0:
                raise SimulatorError("bit period must be positive")

    @classmethod
    def const(cls, value: float) -> "Angle":
        return cls("const", (), 1.0, float(value))

    @classmethod
    def param(cls, slot: int, scale: float = 1.0, offset: float = 0.0) -> "Angle":
        return cls("param", (slot,), scale, offset)

    @classmethod
    def data(cls, *slots: int, scale: float = 1.0, offset: float = 0.0) -> "Angle":
        return cls("data", tuple(slots), scale, offset)

    def scaled(self, factor: float) -> "Angle":
        return Angle(self.source, self.index, self.scale * factor, self.offset * factor, self.bit, self.period)

    def negated(self) -> "Angle":
        if self.bit is not None:
            return Angle(self.source, self.index, self.scale, self.offset, self.bit, self.period)
        return self.scaled(-1.0)

    def affine_value(self, params: np.ndarray, data: np.ndarray):
        """The pre-quantization value; scalar, or shape (batch,) for data angles."""
        if self.source == "const":
            return self.offset
        if self.source == "param":
            if params.ndim == 2:
                return self.scale * params[:, self.index[0]] + self.offset
            return self.scale * float(params[self.index[0]]) + self.offset
        prod = data[:, self.index[0]]
        for i in self.index[1:]:
            prod = prod * data[:, i]
        return self.scale * prod + self.offset

    def bind(self, params: np.ndarray, data: np.ndarray):
        value = self.affine_value(params, data)
        if self.bit is None:
            return value
        j, p = self.bit
        return math.pi * quantized_bits(value, p, self.period)[..., j - 1]


def quantized_bits(values, p: int, period: float = 1.0) -> np.ndarray:
    """Most-significant-first bits of ``(values / period) mod 1`` rounded to p bits."""
    frac = np.mod(np.asarray(values, dtype=float) / period, 1.0)
    level = np.floor(frac * (1 << p) + 0.5).astype(np.int64) % (1 << p)
    shifts = np.arange(p - 1, -1, -1)
    return ((level[..., None] >> shifts) & 1).astype(float)


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple[int, ...]
    controls: tuple[int, ...] = ()
    angle: Angle | None = None
    pauli: str | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise SimulatorError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "controls", tuple(int(c) for c in self.controls))
        qubits = self.targets + self.controls
        if len(set(qubits)) != len(qubits):
            raise SimulatorError(f"{self.kind}: targets and controls overlap: {qubits}")
        if self.kind == "PAULI":
            if not self.pauli or len(self.pauli) != len(self.targets):
                raise SimulatorError("PAULI gate needs a Pauli label per target")
            if any(ch not in PAULI_LETTERS for ch in self.pauli):
                raise SimulatorError(f"bad Pauli label {self.pauli!r}")
        elif len(self.targets) != 1:
            raise SimulatorError(f"{self.kind} acts on exactly one target")
        if self.kind in ("CNOT", "CZ") and not self.controls:
            raise SimulatorError(f"{self.kind} needs at least one control")
        if self.kind in ROTATION_KINDS and self.angle is None:
            raise SimulatorError(f"{self.kind} needs an angle")
        if self.kind not in ROTATION_KINDS and self.angle is not None:
            raise SimulatorError(f"{self.kind} takes no angle")

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.targets + self.controls

    @property
    def is_parametric(self) -> bool:
        return self.angle is not None and self.angle.source == "param"

    @property
    def is_encoding(self) -> bool:
        return self.angle is not None and self.angle.source == "data"

    def inverse(self) -> "Gate":
        if self.angle is None:
            return self
        if self.angle.bit is not None:
            # RX(pi * b) is self-inverse up to a global phase
            return self
        return Gate(self.kind, self.targets, self.controls, self.angle.negated(), self.pauli)

    def remapped(self, qubit_map) -> "Gate":
        return Gate(
            self.kind,
            tuple(qubit_map[q] for q in self.targets),
            tuple(qubit_map[q] for q in self.controls),
            self.angle,
            self.pauli,
        )


# shorthand constructors; used throughout the package and the tests
def H(q):
    return Gate("H", (q,))


def X(q):
    return Gate("X", (q,))


def CNOT(control, target):
    return Gate("CNOT", (target,), (control,) if isinstance(control, int) else tuple(control))


def CZ(a, b):
    return Gate("CZ", (b,), (a,))


def RX(q, angle):
    return Gate("RX", (q,), angle=_as_angle(angle))


def RY(q, angle):
    return Gate("RY", (q,), angle=_as_angle(angle))


def RZ(q, angle, controls=()):
    return Gate("RZ", (q,), tuple(controls), angle=_as_angle(angle))


def PauliRotation(targets, pauli, angle):
    return Gate("PAULI", tuple(targets), angle=_as_angle(angle), pauli=pauli)


def _as_angle(angle) -> Angle:
    return angle if isinstance(angle, Angle) else Angle.const(float(angle))


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    gates: tuple[Gate, ...] = ()
    num_params: int = 0
    num_data: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.num_qubits < 1:
            raise SimulatorError("a circuit needs at least one qubit")
        for pos, g in enumerate(self.gates):
            for q in g.qubits:
                if not 0 <= q < self.num_qubits:
                    raise SimulatorError(f"gate {pos} ({g.kind}) touches qubit {q} outside [0, {self.num_qubits})")
            if g.angle is None:
                continue
            limit = self.num_params if g.angle.source == "param" else self.num_data
            for slot in g.angle.index:
                if not 0 <= slot < limit:
                    raise SimulatorError(
                        f"gate {pos} ({g.kind}) references {g.angle.source} slot {slot}, only {limit} declared"
                    )

    def __len__(self):
        return len(self.gates)

    def inverse(self) -> "Circuit":
        return Circuit(self.num_qubits, tuple(g.inverse() for g in reversed(self.gates)), self.num_params, self.num_data)

    def then(self, other: "Circuit") -> "Circuit":
        if other.num_qubits != self.num_qubits:
            raise SimulatorError("cannot compose circuits of different widths")
        return Circuit(
            self.num_qubits,
            self.gates + other.gates,
            max(self.num_params, other.num_params),
            max(self.num_data, other.num_data),
        )

    @property
    def has_bit_angles(self) -> bool:
        return any(g.angle is not None and g.angle.bit is not None for g in self.gates)


@dataclass
class Statevector:
    """Dense amplitudes of an n-qubit pure state. Mutated in place by apply_gate."""

    num_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.num_qubits,):
            raise SimulatorError(
                f"expected {1 << self.num_qubits} amplitudes for {self.num_qubits} qubits, got {self.amplitudes.shape}"
            )

    @classmethod
    def zero(cls, num_qubits: int) -> "Statevector":
        _check_capacity(num_qubits)
        amps = np.zeros(1 << num_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(num_qubits, amps)

    @classmethod
    def basis(cls, bits: str) -> "Statevector":
        state = cls.zero(len(bits))
        state.amplitudes[0] = 0.0
        state.amplitudes[int(bits, 2)] = 1.0
        return state

    def copy(self) -> "Statevector":
        return Statevector(self.num_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def _check_capacity(num_qubits: int):
    if num_qubits > MAX_QUBITS:
        raise CapacityError(f"{num_qubits} qubits exceeds the simulator limit of {MAX_QUBITS}")


# --------------------------------------------------------------------------
# batched kernels


def _view(psi: np.ndarray, n: int) -> np.ndarray:
    return psi.reshape((psi.shape[0],) + (2,) * n)


def _restrict(t: np.ndarray, n: int, controls: Sequence[int]):
    """Sub-view of a (batch, 2, ..., 2) tensor where all controls read 1.

    Returns the view and the axis of every remaining qubit in it.
    """
    if not controls:
        return t, {q: q + 1 for q in range(n)}
    idx = [slice(None)] * (n + 1)
    for c in controls:
        idx[c + 1] = 1
    cset = set(controls)
    axes = {}
    ax = 1
    for q in range(n):
        if q in cset:
            continue
        axes[q] = ax
        ax += 1
    return t[tuple(idx)], axes


def _slot(ndim: int, ax: int, value: int):
    return (slice(None),) * ax + (value,)


def _bcast(coef, ndim: int):
    """Give a per-batch coefficient array the shape needed to broadcast."""
    if np.ndim(coef) == 0:
        return coef
    return np.reshape(coef, (-1,) + (1,) * (ndim - 1))


def _apply_matrix(sub: np.ndarray, ax: int, u00, u01, u10, u11):
    i0, i1 = _slot(sub.ndim, ax, 0), _slot(sub.ndim, ax, 1)
    a0 = sub[i0].copy()
    a1 = sub[i1].copy()
    nd = a0.ndim
    u00, u01, u10, u11 = (_bcast(u, nd) for u in (u00, u01, u10, u11))
    sub[i0] = u00 * a0 + u01 * a1
    sub[i1] = u10 * a0 + u11 * a1


def _apply_diag(sub: np.ndarray, ax: int, d0, d1):
    i0, i1 = _slot(sub.ndim, ax, 0), _slot(sub.ndim, ax, 1)
    nd = sub.ndim - 1
    sub[i0] *= _bcast(d0, nd)
    sub[i1] *= _bcast(d1, nd)


def _swap(sub: np.ndarray, ax: int):
    i0, i1 = _slot(sub.ndim, ax, 0), _slot(sub.ndim, ax, 1)
    tmp = sub[i0].copy()
    sub[i0] = sub[i1]
    sub[i1] = tmp


def _pauli_times(arr: np.ndarray, axes: Sequence[int], letters: str) -> np.ndarray:
    """Return P @ arr for a Pauli string acting on the given tensor axes."""
    out = arr
    for ax, ch in zip(axes, letters):
        if ch == "I":
            continue
        shape = [1] * out.ndim
        shape[ax] = 2
        if ch in "XY":
            out = np.flip(out, axis=ax)
        if ch == "Y":
            out = out * np.array([-1j, 1j]).reshape(shape)
        elif ch == "Z":
            out = out * np.array([1.0, -1.0]).reshape(shape)
    if out is arr:
        out = arr.copy()
    return out


def apply_gate_batch(psi: np.ndarray, n: int, gate: Gate, angle=None) -> np.ndarray:
    """Apply ``gate`` in place to a (batch, 2**n) array; ``angle`` may be per-batch."""
    t = _view(psi, n)
    sub, axes = _restrict(t, n, gate.controls)
    kind = gate.kind
    if kind == "PAULI":
        c = _bcast(np.cos(np.asarray(angle) / 2), sub.ndim)
        s = _bcast(np.sin(np.asarray(angle) / 2), sub.ndim)
        p_sub = _pauli_times(sub, [axes[q] for q in gate.targets], gate.pauli)
        sub[...] = c * sub - 1j * s * p_sub
        return psi
    ax = axes[gate.targets[0]]
    if kind in ("X", "CNOT"):
        _swap(sub, ax)
    elif kind in ("Z", "CZ"):
        _apply_diag(sub, ax, 1.0, -1.0)
    elif kind == "H":
        r = 1 / math.sqrt(2)
        _apply_matrix(sub, ax, r, r, r, -r)
    elif kind == "Y":
        _apply_matrix(sub, ax, 0, -1j, 1j, 0)
    else:
        a = np.asarray(angle, dtype=float)
        c, s = np.cos(a / 2), np.sin(a / 2)
        if kind == "RZ":
            _apply_diag(sub, ax, np.exp(-0.5j * a), np.exp(0.5j * a))
        elif kind == "RX":
            _apply_matrix(sub, ax, c, -1j * s, -1j * s, c)
        else:
            _apply_matrix(sub, ax, c, -s, s, c)
    return psi


def generator_times(psi: np.ndarray, n: int, gate: Gate) -> np.ndarray:
    """Return G psi where the rotation is exp(-i angle G); G = P/2 restricted to the control subspace."""
    out = np.zeros_like(psi)
    src, axes = _restrict(_view(psi, n), n, gate.controls)
    dst, _ = _restrict(_view(out, n), n, gate.controls)
    if gate.kind == "PAULI":
        targets, letters = gate.targets, gate.pauli
    else:
        targets, letters = gate.targets, gate.kind[1]
    dst[...] = 0.5 * _pauli_times(src, [axes[q] for q in targets], letters)
    return out


def bind_angles(circuit: Circuit, params, data) -> list:
    params = np.asarray(params, dtype=float)
    return [None if g.angle is None else g.angle.bind(params, data) for g in circuit.gates]


def _as_data(data, batch: int | None, num_data: int) -> np.ndarray:
    if data is None or (np.size(data) == 0 and num_data == 0):
        return np.zeros((batch or 1, 0))
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[1] != num_data:
        raise SimulatorError(f"circuit declares {num_data} data slots, got data of width {arr.shape[1]}")
    return arr


def _check_params(circuit: Circuit, params) -> np.ndarray:
    params = np.asarray(params if params is not None else (), dtype=float)
    width = params.shape[-1] if params.ndim else 0
    if params.size == 0:
        width = 0
    if width != circuit.num_params:
        raise SimulatorError(f"circuit declares {circuit.num_params} parameter slots, got {width} values")
    return params


def run_batch(
    circuit: Circuit,
    params=(),
    data=None,
    initial: np.ndarray | None = None,
    overrides: dict | None = None,
) -> np.ndarray:
    """Simulate ``circuit`` for every row of ``data``; returns (batch, 2**n) amplitudes.

    ``params`` is shared across the batch (shape (P,)) or per row (shape
    (batch, P)). ``initial`` optionally replaces |0...0>; it is not modified.
    ``overrides`` maps gate positions to angles used instead of the bound ones.
    """
    n = circuit.num_qubits
    _check_capacity(n)
    params = _check_params(circuit, params)
    batch = None
    if initial is not None:
        batch = initial.shape[0]
    elif params.ndim == 2:
        batch = params.shape[0]
    data = _as_data(data, batch, circuit.num_data)
    if batch is None:
        batch = data.shape[0]
    if data.shape[0] != batch:
        if data.shape[0] == 1:
            data = np.repeat(data, batch, axis=0)
        else:
            raise SimulatorError(f"batch mismatch: {data.shape[0]} data rows vs {batch}")
    if initial is None:
        psi = np.zeros((batch, 1 << n), dtype=np.complex128)
        psi[:, 0] = 1.0
    else:
        if initial.shape != (batch, 1 << n):
            raise SimulatorError(f"initial state shape {initial.shape} does not match {(batch, 1 << n)}")
        psi = np.array(initial, dtype=np.complex128, copy=True)
    angles = bind_angles(circuit, params, data)
    if overrides:
        for pos, value in overrides.items():
            angles[pos] = value
    for g, a in zip(circuit.gates, angles):
        apply_gate_batch(psi, n, g, a)
    return psi


# --------------------------------------------------------------------------
# single-state API


def apply_gate(state: Statevector, gate: Gate, bound_angle: float | None = None) -> Statevector:
    """Apply ``gate`` to ``state`` in place and return it."""
    for q in gate.qubits:
        if not 0 <= q < state.num_qubits:
            raise SimulatorError(f"{gate.kind} touches qubit {q} outside [0, {state.num_qubits})")
    if gate.angle is not None and bound_angle is None:
        if gate.angle.source != "const":
            raise SimulatorError(f"{gate.kind} is parametric; a bound angle is required")
        bound_angle = gate.angle.offset
    apply_gate_batch(state.amplitudes[None, :], state.num_qubits, gate, bound_angle)
    return state


def run_circuit(circuit: Circuit, params=(), data=()) -> Statevector:
    """Apply every gate of ``circuit`` to |0...0> with the given slot values."""
    data = np.asarray(data, dtype=float).reshape(1, -1) if circuit.num_data else None
    psi = run_batch(circuit, params, data)
    return Statevector(circuit.num_qubits, psi[0])


def inner_product(a: Statevector, b: Statevector) -> complex:
    if a.num_qubits != b.num_qubits:
        raise SimulatorError(f"qubit count mismatch: {a.num_qubits} vs {b.num_qubits}")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity(a: Statevector, b: Statevector) -> float:
    return abs(inner_product(a, b)) ** 2


# --------------------------------------------------------------------------
# observables


@dataclass(frozen=True)
class Observable:
    """``scale * (sum_k w_k P_k) (x) Pi`` with Pi a computational-basis projector.

    ``projector`` lists (qubit, accepted bit) pairs; every Pauli term must be
    the identity on those qubits.
    """

    num_qubits: int
    terms: tuple[tuple[float, str], ...]
    projector: tuple[tuple[int, int], ...] = ()
    scale: float = 1.0

    def __post_init__(self):
        terms = tuple((float(w), str(p)) for w, p in self.terms)
        proj = tuple((int(q), int(b)) for q, b in self.projector)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "projector", proj)
        for _, p in terms:
            if len(p) != self.num_qubits or any(ch not in PAULI_LETTERS for ch in p):
                raise SimulatorError(f"Pauli string {p!r} is not a length-{self.num_qubits} word over IXYZ")
        for q, b in proj:
            if not 0 <= q < self.num_qubits or b not in (0, 1):
                raise SimulatorError(f"bad projector factor ({q}, {b})")
            if any(p[q] != "I" for _, p in terms):
                raise SimulatorError(f"Pauli terms must act trivially on projected qubit {q}")

    @classmethod
    def pauli(cls, label: str, weight: float = 1.0) -> "Observable":
        return cls(len(label), ((weight, label),))

    @classmethod
    def z(cls, qubit: int, num_qubits: int) -> "Observable":
        label = ["I"] * num_qubits
        label[qubit] = "Z"
        return cls.pauli("".join(label))

    def norm_bound(self) -> float:
        return abs(self.scale) * sum(abs(w) for w, _ in self.terms)

    def padded(self, extra: int, projector=(), scale_factor: float = 1.0) -> "Observable":
        """Extend with ``extra`` trailing qubits (identity) and more projector factors."""
        return Observable(
            self.num_qubits + extra,
            tuple((w, p + "I" * extra) for w, p in self.terms),
            self.projector + tuple(projector),
            self.scale * scale_factor,
        )


def expectation_batch(psi: np.ndarray, n: int, obs: Observable) -> np.ndarray:
    """Exact <psi|O|psi> for each row of a (batch, 2**n) array."""
    if obs.num_qubits != n:
        raise SimulatorError(f"observable on {obs.num_qubits} qubits, state on {n}")
    phi = psi
    if obs.projector:
        phi = psi.copy()
        t = _view(phi, n)
        for q, b in obs.projector:
            idx = [slice(None)] * (n + 1)
            idx[q + 1] = 1 - b
            t[tuple(idx)] = 0.0
    t = _view(phi, n)
    total = np.zeros(psi.shape[0])
    for w, label in obs.terms:
        p_t = _pauli_times(t, list(range(1, n + 1)), label)
        vals = np.einsum("bi,bi->b", phi.conj(), p_t.reshape(phi.shape))
        total += w * vals.real
    return obs.scale * total


def expectation(state: Statevector, obs: Observable) -> float:
    return float(expectation_batch(state.amplitudes[None, :], state.num_qubits, obs)[0])


def apply_observable(psi: np.ndarray, n: int, obs: Observable) -> np.ndarray:
    """O @ psi for each row (used by adjoint differentiation)."""
    phi = psi.copy()
    if obs.projector:
        t = _view(phi, n)
        for q, b in obs.projector:
            idx = [slice(None)] * (n + 1)
            idx[q + 1] = 1 - b
            t[tuple(idx)] = 0.0
    t = _view(phi, n)
    out = np.zeros_like(phi)
    for w, label in obs.terms:
        out += w * _pauli_times(t, list(range(1, n + 1)), label).reshape(phi.shape)
    return obs.scale * out


# --------------------------------------------------------------------------
# classical controls


def reduce_classical_controls(circuit: Circuit, fixed: dict[int, int]) -> Circuit:
    """Specialise ``circuit`` to qubits frozen in computational basis states.

    Frozen qubits may only act as controls. A gate whose frozen controls are
    not all 1 is dropped; otherwise those controls are removed. The result acts
    on the remaining qubits, renumbered in order.
    """
    keep = [q for q in range(circuit.num_qubits) if q not in fixed]
    qmap = {q: i for i, q in enumerate(keep)}
    gates = []
    for g in circuit.gates:
        if any(q in fixed for q in g.targets):
            raise SimulatorError(f"{g.kind} targets a classically fixed qubit")
        frozen = [c for c in g.controls if c in fixed]
        if any(fixed[c] != 1 for c in frozen):
            continue
        live = tuple(qmap[c] for c in g.controls if c not in fixed)
        kind = g.kind
        if not live and kind == "CNOT":
            kind = "X"
        elif not live and kind == "CZ":
            kind = "Z"
        gates.append(Gate(kind, tuple(qmap[q] for q in g.targets), live, g.angle, g.pauli))
    return Circuit(len(keep), tuple(gates), circuit.num_params, circuit.num_data)


def chunk_rows(total: int, num_qubits: int, budget: int = 1 << 22) -> Iterable[slice]:
    """Row slices keeping each simulated block under ``budget`` amplitudes."""
    step = max(1, budget >> num_qubits)
    for start in range(0, total, step):
        yield slice(start, min(total, start + step))


def classical_qubits(circuit: Circuit, obs: Observable | None = None) -> tuple[int, ...]:
    """Qubits that stay in a computational basis state throughout ``circuit``.

    Such a qubit is flipped only by uncontrolled X gates or bit-valued RX
    rotations, all issued before it first acts as a control, and it is never
    touched by anything else. Observable terms must be the identity on it.
    """
    used_as_control: set[int] = set()
    disqualified: set[int] = set()
    for g in circuit.gates:
        used_as_control.update(g.controls)
        is_flip = not g.controls and (g.kind == "X" or (g.kind == "RX" and g.angle.bit is not None))
        for q in g.targets:
            if not is_flip or q in used_as_control:
                disqualified.add(q)
    flipped = {g.targets[0] for g in circuit.gates if not g.controls and g.kind in ("X", "RX")}
    result = []
    for q in range(circuit.num_qubits):
        if q in disqualified or q not in flipped | used_as_control:
            continue
        if obs is not None and any(p[q] != "I" for _, p in obs.terms):
            continue
        result.append(q)
    return tuple(result)


def expectation_values(
    circuit: Circuit,
    obs: Observable,
    params=(),
    data=None,
    method: str = "auto",
) -> np.ndarray:
    """Exact expectation of ``obs`` after ``circuit`` for each data row.

    ``method="full"`` simulates every qubit. ``method="classical"`` keeps
    basis-state control qubits (see :func:`classical_qubits`) as per-row bits
    and simulates only the rest; ``"auto"`` picks it whenever such qubits exist.
    Both are exact; the classical path is what makes wide bit-register circuits
    tractable.
    """
    if method not in ("auto", "full", "classical"):
        raise SimulatorError(f"unknown evaluation method {method!r}")
    if obs.num_qubits != circuit.num_qubits:
        raise SimulatorError(f"observable on {obs.num_qubits} qubits, circuit on {circuit.num_qubits}")
    fixed = classical_qubits(circuit, obs) if method != "full" else ()
    if method == "classical" and not fixed:
        raise SimulatorError("circuit has no classically controlled qubits")
    params = _check_params(circuit, params)
    data = _as_data(data, None, circuit.num_data)
    if params.ndim == 2 and data.shape[0] == 1:
        data = np.repeat(data, params.shape[0], axis=0)
    rows = data.shape[0]
    out = np.empty(rows)
    width = circuit.num_qubits - len(fixed)
    for sl in chunk_rows(rows, width):
        p = params[sl] if params.ndim == 2 else params
        if fixed:
            out[sl] = _classical_expectations(circuit, obs, fixed, p, data[sl])
        else:
            psi = run_batch(circuit, p, data[sl])
            out[sl] = expectation_batch(psi, circuit.num_qubits, obs)
    return out


def _classical_expectations(circuit, obs, fixed, params, data):
    n = circuit.num_qubits
    keep = [q for q in range(n) if q not in fixed]
    _check_capacity(len(keep))
    qmap = {q: i for i, q in enumerate(keep)}
    rows = data.shape[0]
    bits = {q: np.zeros(rows, dtype=bool) for q in fixed}
    angles = bind_angles(circuit, params, data)
    psi = np.zeros((rows, 1 << len(keep)), dtype=np.complex128)
    psi[:, 0] = 1.0
    for g, a in zip(circuit.gates, angles):
        if g.targets[0] in bits:
            # X or RX(pi * b): a basis flip up to a per-row global phase
            flip = np.ones(rows, dtype=bool) if g.kind == "X" else np.broadcast_to(np.asarray(a) > 1.0, (rows,))
            bits[g.targets[0]] ^= flip
            continue
        frozen = [c for c in g.controls if c in bits]
        live = tuple(qmap[c] for c in g.controls if c not in bits)
        kind = g.kind
        if not live and kind in ("CNOT", "CZ"):
            kind = "X" if kind == "CNOT" else "Z"
        local = Gate(kind, tuple(qmap[q] for q in g.targets), live, g.angle, g.pauli)
        if not frozen:
            apply_gate_batch(psi, len(keep), local, a)
            continue
        mask = np.logical_and.reduce([bits[c] for c in frozen])
        if mask.all():
            apply_gate_batch(psi, len(keep), local, a)
        elif mask.any():
            sub = psi[mask]
            apply_gate_batch(sub, len(keep), local, a[mask] if np.ndim(a) else a)
            psi[mask] = sub
    reduced = Observable(
        len(keep),
        tuple((w, "".join(p[q] for q in keep)) for w, p in obs.terms),
        tuple((qmap[q], b) for q, b in obs.projector if q in qmap),
        obs.scale,
    )
    values = expectation_batch(psi, len(keep), reduced)
    for q, b in obs.projector:
        if q in bits:
            values = values * (bits[q] == bool(b))
    return values
