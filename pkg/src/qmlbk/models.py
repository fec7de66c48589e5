"""Explicit, data re-uploading and implicit (kernel) quantum models."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import encodings as enc_mod
from .encodings import FeatureEncoding
from .simulator import (
    Angle,
    Circuit,
    Gate,
    Observable,
    PauliRotation,
    CNOT,
    CZ,
    expectation_values,
)


class ModelError(ValueError):
    """Model constructed or evaluated with inconsistent shapes."""


def _params(theta, count: int) -> np.ndarray:
    """Shared parameters (shape (P,)) or one parameter row per input (shape (rows, P))."""
    theta = np.asarray(theta if theta is not None else (), dtype=float)
    if theta.ndim == 2:
        if theta.shape[1] != count:
            raise ModelError(f"model has {count} parameter slots, got rows of {theta.shape[1]}")
        return theta
    theta = theta.reshape(-1)
    if theta.size != count:
        raise ModelError(f"model has {count} parameter slots, got {theta.size} values")
    return theta


@dataclass(frozen=True)
class ExplicitModel:
    """f(x) = w <phi(x)| V(theta)^dag O V(theta) |phi(x)>."""

    encoding: FeatureEncoding
    variational: Circuit
    observable: Observable
    weight: float = 1.0

    def __post_init__(self):
        if self.variational.num_qubits != self.encoding.num_qubits:
            raise ModelError(
                f"variational circuit on {self.variational.num_qubits} qubits, encoding on {self.encoding.num_qubits}"
            )
        if self.variational.num_data:
            raise ModelError("the variational circuit of an explicit model may not read data slots")
        if self.observable.num_qubits != self.encoding.num_qubits:
            raise ModelError("observable width does not match the encoding")

    @property
    def num_params(self) -> int:
        return self.variational.num_params

    @property
    def arity(self) -> int:
        return self.encoding.arity

    @property
    def circuit(self) -> Circuit:
        return Circuit(
            self.encoding.num_qubits,
            self.encoding.circuit.gates + self.variational.gates,
            self.variational.num_params,
            self.encoding.arity,
        )

    def expectations(self, theta, X, method: str = "auto") -> np.ndarray:
        """Unweighted <O> for each row of X."""
        X = self.encoding._rows(X)
        return expectation_values(self.circuit, self.observable, _params(theta, self.num_params), X, method)

    def evaluate(self, theta, X, weight: float | None = None, method: str = "auto") -> np.ndarray:
        w = self.weight if weight is None else weight
        return w * self.expectations(theta, X, method)


@dataclass(frozen=True)
class ReuploadingModel:
    """f(x) = <0| U(x, theta)^dag O U(x, theta) |0> with data and parameters interleaved."""

    circuit: Circuit
    observable: Observable
    warn_degenerate: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.observable.num_qubits != self.circuit.num_qubits:
            raise ModelError("observable width does not match the circuit")
        if self.warn_degenerate and self.is_degenerate:
            warnings.warn(
                "no data-dependent gate follows a parametrized gate; this re-uploading model is an explicit model",
                stacklevel=2,
            )

    @property
    def is_degenerate(self) -> bool:
        seen_param = False
        for g in self.circuit.gates:
            if g.is_parametric:
                seen_param = True
            elif g.is_encoding and seen_param:
                return False
        return True

    @property
    def num_params(self) -> int:
        return self.circuit.num_params

    @property
    def arity(self) -> int:
        return self.circuit.num_data

    @property
    def encoding_gates(self) -> list[int]:
        return [pos for pos, g in enumerate(self.circuit.gates) if g.is_encoding]

    def evaluate(self, theta, X, method: str = "auto") -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.arity:
            raise ModelError(f"model reads {self.arity} data slots, got inputs of length {X.shape[1]}")
        return expectation_values(self.circuit, self.observable, _params(theta, self.num_params), X, method)


@dataclass(frozen=True)
class ImplicitModel:
    """f(x) = sum_m alpha_m k(x, x_m) over stored support points."""

    encoding: FeatureEncoding
    support: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        support = self.encoding._rows(self.support)
        alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        if alpha.size != support.shape[0]:
            raise ModelError(f"{alpha.size} weights for {support.shape[0]} support points")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "alpha", alpha)

    @property
    def arity(self) -> int:
        return self.encoding.arity

    def evaluate(self, X, method: str = "auto") -> np.ndarray:
        return enc_mod.cross_gram(self.encoding, X, self.support, method) @ self.alpha

    def dense_observable(self) -> np.ndarray:
        """O = sum_m alpha_m |phi(x_m)><phi(x_m)| as a dense matrix."""
        S = self.encoding.states(self.support)
        return (S.T * self.alpha) @ S.conj()

    def evaluate_observable(self, X) -> np.ndarray:
        """Evaluate through the dense observable instead of kernel values."""
        O = self.dense_observable()
        phi = self.encoding.states(X)
        return np.einsum("bi,ij,bj->b", phi.conj(), O, phi).real


# --------------------------------------------------------------------------
# parity circuit


def parity_model(d: int) -> ReuploadingModel:
    """Single-qubit re-uploading circuit whose X expectation can equal any parity of x."""
    enc = enc_mod.parity_angles(d)
    return ReuploadingModel(enc.circuit, Observable.pauli("X"))


def parity_parameters(support, d: int) -> np.ndarray:
    """theta_i = pi/2 on the parity support, 0 elsewhere."""
    theta = np.zeros(d)
    theta[list(support)] = math.pi / 2
    return theta


# --------------------------------------------------------------------------
# random models for testing mappings and gradients


def random_observable(n: int, rng: np.random.Generator, terms: int = 2) -> Observable:
    labels = set()
    while len(labels) < min(terms, 4**n - 1):
        label = "".join(rng.choice(list("IXYZ"), size=n))
        if label != "I" * n:
            labels.add(label)
    w = rng.normal(size=len(labels))
    w /= np.abs(w).sum()
    return Observable(n, tuple(zip(w.tolist(), sorted(labels))))


def _variational_block(n, rng, slot, gates):
    for q in range(n):
        for kind in rng.permutation(["RX", "RY", "RZ"])[:2]:
            gates.append(Gate(str(kind), (q,), angle=Angle.param(slot)))
            slot += 1
    if n > 1:
        for q in range(n - 1):
            gates.append(CNOT(q, q + 1) if rng.random() < 0.5 else CZ(q, q + 1))
    return slot


def random_reuploading_model(
    n: int,
    D: int,
    rng: np.random.Generator,
    kinds=("RZ", "RX", "RY", "PAULI"),
    num_terms: int = 2,
    affine: bool = True,
) -> ReuploadingModel:
    """Random layered model with exactly D data-dependent gates, one per data slot.

    Variational blocks (two random-axis rotations per qubit plus a CNOT/CZ
    chain) surround every encoding gate.
    """
    gates: list[Gate] = []
    slot = _variational_block(n, rng, 0, gates)
    for i in range(D):
        kind = str(rng.choice(kinds))
        scale = float(rng.uniform(0.5, 1.5)) if affine else 1.0
        offset = float(rng.uniform(-1, 1)) if affine else 0.0
        angle = Angle.data(i, scale=scale, offset=offset)
        if kind == "PAULI" and n > 1:
            pair = tuple(int(q) for q in rng.choice(n, size=2, replace=False))
            label = "".join(rng.choice(list("XYZ"), size=2))
            gates.append(PauliRotation(pair, label, angle))
        else:
            kind = "RZ" if kind == "PAULI" else kind
            gates.append(Gate(kind, (int(rng.integers(n)),), angle=angle))
        slot = _variational_block(n, rng, slot, gates)
    circuit = Circuit(n, gates, slot, D)
    return ReuploadingModel(circuit, random_observable(n, rng, num_terms), warn_degenerate=False)
