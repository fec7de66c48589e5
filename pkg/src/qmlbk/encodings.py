"""Fixed feature encodings x -> |phi(x)> and the fidelity kernels they induce."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .simulator import (
    Angle,
    Circuit,
    Gate,
    H,
    PauliRotation,
    RZ,
    Statevector,
    chunk_rows,
    quantized_bits,
    run_batch,
)

ENCODING_KINDS = ("havlicek", "bitstring", "gadget", "parity_angles", "custom")


class EncodingError(ValueError):
    """Input does not fit the encoding."""


@dataclass(frozen=True)
class FeatureEncoding:
    """A data-only circuit together with what is known about its structure.

    ``info`` carries kind-specific metadata used by the analytic kernels and
    by the mappings (bit precision, gadget layout, angle recipes).
    """

    kind: str
    circuit: Circuit
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in ENCODING_KINDS:
            raise EncodingError(f"unknown encoding kind {self.kind!r}")
        if self.kind != "parity_angles" and self.circuit.num_params:
            raise EncodingError("a feature encoding may not carry parameter slots")

    @property
    def num_qubits(self) -> int:
        return self.circuit.num_qubits

    @property
    def arity(self) -> int:
        return self.circuit.num_data

    def _rows(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.arity:
            raise EncodingError(f"{self.kind} encoding expects inputs of length {self.arity}, got shape {X.shape}")
        return X

    def bound(self, theta) -> "FeatureEncoding":
        """Freeze parameter slots to constants, giving a pure data map (for parity_angles)."""
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != self.circuit.num_params:
            raise EncodingError(f"expected {self.circuit.num_params} parameters, got {theta.size}")
        gates = []
        for g in self.circuit.gates:
            if g.angle is not None and g.angle.source == "param":
                g = Gate(g.kind, g.targets, g.controls, Angle.const(g.angle.bind(theta, np.zeros((1, 0)))), g.pauli)
            gates.append(g)
        circuit = Circuit(self.num_qubits, gates, 0, self.arity)
        return FeatureEncoding("custom", circuit, dict(self.info, bound_from=self.kind))

    def states(self, X) -> np.ndarray:
        """Feature states for every row of X, shape (rows, 2**n)."""
        X = self._rows(X)
        out = np.empty((X.shape[0], 1 << self.num_qubits), dtype=np.complex128)
        for sl in chunk_rows(X.shape[0], self.num_qubits):
            out[sl] = run_batch(self.circuit, (), X[sl])
        return out


def encode(enc: FeatureEncoding, x) -> Statevector:
    return Statevector(enc.num_qubits, enc.states(x)[0])


# --------------------------------------------------------------------------
# constructors


def havlicek(n: int, d: int | None = None, input_scale: float = 1.0) -> FeatureEncoding:
    """H, U_z(x), H, U_z(x) with U_z(x) = exp(-i pi [sum x_i Z_i + sum_{i<j} x_i x_j Z_i Z_j]).

    With ``d > n`` component i is folded onto qubit ``i mod n``; ZZ couplings
    between components sharing a qubit are skipped. ``input_scale`` multiplies
    x before encoding (inputs in {-1, 1} would otherwise give trivial phases).
    """
    if n < 1:
        raise EncodingError("need at least one qubit")
    d = n if d is None else d
    if d < 1:
        raise EncodingError("need at least one input component")
    s = float(input_scale)
    uz = [RZ(i % n, Angle.data(i, scale=2 * math.pi * s)) for i in range(d)]
    for i in range(d):
        for j in range(i + 1, d):
            a, b = i % n, j % n
            if a != b:
                uz.append(PauliRotation((a, b), "ZZ", Angle.data(i, j, scale=2 * math.pi * s * s)))
    hs = [H(q) for q in range(n)]
    gates = hs + uz + hs + uz
    return FeatureEncoding("havlicek", Circuit(n, gates, 0, d), {"n": n, "d": d, "input_scale": s})


def bitstring(
    d: int,
    p: int,
    period: float = 1.0,
    num_working: int = 0,
    components: Sequence[Angle] | None = None,
    num_data: int | None = None,
) -> FeatureEncoding:
    """Fixed-point bits of each component on dedicated qubits, via RX(pi * bit).

    Component i is reduced as ``(v_i / period) mod 1`` and rounded to ``p``
    bits; bit j (most significant first) sits on qubit
    ``num_working + i*p + j``. By default ``v_i = x_i``; ``components`` lets a
    mapping supply arbitrary affine angle recipes instead.
    """
    if p < 1:
        raise EncodingError("need at least one bit per component")
    if components is None:
        components = [Angle.data(i) for i in range(d)]
    components = list(components)
    if num_data is None:
        num_data = max((max(a.index) + 1 for a in components if a.source == "data"), default=0)
    gates = []
    for i, a in enumerate(components):
        for j in range(1, p + 1):
            bit_angle = Angle(a.source, a.index, a.scale, a.offset, bit=(j, p), period=period)
            gates.append(Gate("RX", (num_working + i * p + j - 1,), angle=bit_angle))
    n = num_working + len(components) * p
    info = {"p": p, "period": period, "num_working": num_working, "components": tuple(components)}
    return FeatureEncoding("bitstring", Circuit(n, gates, 0, num_data), info)


def gadget_product(
    angles: Sequence[Angle],
    repetitions: int = 1,
    num_working: int = 0,
    num_witnesses: int = 0,
    num_data: int | None = None,
) -> FeatureEncoding:
    """Product of gadget ancillas RZ(2^(j-1) h_i(x))|+>, j = 1..N, for each recipe h_i.

    Qubit layout: working qubits, then witness qubits (left in |0>), then the
    ancilla of gate i, repetition j at ``base + i*N + (j-1)``.
    """
    angles = list(angles)
    if repetitions < 1:
        raise EncodingError("need at least one repetition")
    base = num_working + num_witnesses
    gates = []
    for i, a in enumerate(angles):
        for j in range(1, repetitions + 1):
            q = base + i * repetitions + j - 1
            gates.append(H(q))
            gates.append(RZ(q, a.scaled(2 ** (j - 1))))
    if num_data is None:
        num_data = max((max(a.index) + 1 for a in angles if a.source == "data"), default=0)
    n = base + len(angles) * repetitions
    info = {
        "angles": tuple(angles),
        "N": repetitions,
        "num_working": num_working,
        "num_witnesses": num_witnesses,
    }
    return FeatureEncoding("gadget", Circuit(n, gates, 0, num_data), info)


def parity_angles(d: int) -> FeatureEncoding:
    """Single-qubit data re-uploading block with one (RY, RZ, RY) triple per input bit.

    For component i the applied sequence is RY(pi/2 - t_i), RZ(pi/2 (x_i - 1)),
    RY(t_i - pi/2), after an initial Hadamard. With t_i = 0 the triple is the
    identity up to phase on |+>; with t_i = pi/2 it reduces to RZ, which flips
    |+> to |-> exactly when x_i = -1.
    """
    if d < 1:
        raise EncodingError("need at least one input bit")
    gates = [H(0)]
    for i in range(d):
        gates.append(Gate("RY", (0,), angle=Angle.param(i, scale=-1.0, offset=math.pi / 2)))
        gates.append(RZ(0, Angle.data(i, scale=math.pi / 2, offset=-math.pi / 2)))
        gates.append(Gate("RY", (0,), angle=Angle.param(i, scale=1.0, offset=-math.pi / 2)))
    return FeatureEncoding("parity_angles", Circuit(1, gates, d, d), {"d": d})


def custom(circuit: Circuit) -> FeatureEncoding:
    return FeatureEncoding("custom", circuit, {})


def constant(n: int, d: int) -> FeatureEncoding:
    """Encoding that ignores its input: every x maps to |0...0>."""
    return FeatureEncoding("custom", Circuit(n, (), 0, d), {"constant": True})


# --------------------------------------------------------------------------
# kernels


def _bit_levels(enc: FeatureEncoding, X: np.ndarray) -> np.ndarray:
    p, period = enc.info["p"], enc.info["period"]
    cols = [quantized_bits(a.affine_value(np.zeros(0), X), p, period) for a in enc.info["components"]]
    return np.concatenate(cols, axis=1) if cols else np.zeros((X.shape[0], 0))


def analytic_gram(enc: FeatureEncoding, X, Y) -> np.ndarray:
    """Closed-form kernel block for the bitstring and gadget encodings."""
    X, Y = enc._rows(X), enc._rows(Y)
    if enc.kind == "bitstring":
        bx, by = _bit_levels(enc, X), _bit_levels(enc, Y)
        return np.all(bx[:, None, :] == by[None, :, :], axis=2).astype(float)
    if enc.kind == "gadget":
        out = np.ones((X.shape[0], Y.shape[0]))
        for a in enc.info["angles"]:
            hx = a.affine_value(np.zeros(0), X)
            hy = a.affine_value(np.zeros(0), Y)
            delta = hx[:, None] - hy[None, :]
            for j in range(1, enc.info["N"] + 1):
                out *= np.cos(2 ** (j - 1) * delta / 2) ** 2
        return out
    raise EncodingError(f"no closed-form kernel for {enc.kind} encodings")


def has_analytic_kernel(enc: FeatureEncoding) -> bool:
    return enc.kind in ("bitstring", "gadget")


def cross_gram(enc: FeatureEncoding, X, Y, method: str = "auto") -> np.ndarray:
    """Kernel block k(x_a, y_b) = |<phi(x_a)|phi(y_b)>|^2."""
    if method not in ("auto", "simulate", "analytic"):
        raise EncodingError(f"unknown kernel method {method!r}")
    if method == "analytic" or (method == "auto" and has_analytic_kernel(enc)):
        return analytic_gram(enc, X, Y)
    sx, sy = enc.states(X), enc.states(Y)
    return np.abs(sx.conj() @ sy.T) ** 2


def kernel(enc: FeatureEncoding, x, x_prime, method: str = "auto") -> float:
    return float(cross_gram(enc, x, x_prime, method)[0, 0])


def gram_matrix(enc: FeatureEncoding, X, method: str = "auto") -> np.ndarray:
    """Symmetric M x M fidelity kernel matrix over the rows of X."""
    X = enc._rows(X)
    if X.shape[0] == 0:
        raise EncodingError("gram matrix needs at least one point")
    K = cross_gram(enc, X, X, method)
    return (K + K.T) / 2
