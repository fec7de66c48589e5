"""Rewriting data re-uploading models as explicit models.

Three constructions are provided:

* ``map_approximate`` stores each encoding angle to ``p`` bits on ancillas and
  replaces the encoding gate by ``p`` fixed controlled rotations.
* ``map_exact_simple`` prepares each encoding rotation on a |+> ancilla and
  teleports it in with a CNOT; the observable only accepts the ancilla
  outcome 0 and is rescaled by ``2**D``.
* ``map_exact_nested`` chains ``N`` teleportations per gate, each correcting
  the previous failure, so only the all-ones outcome pattern is rejected.

All encoding gates are first lowered to single-qubit RZ rotations of a data
recipe; everything else becomes part of the data-independent variational
circuit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import encodings
from .models import ExplicitModel, ReuploadingModel
from .simulator import (
    MAX_QUBITS,
    CapacityError,
    Circuit,
    Gate,
    H,
    RZ,
)


class MappingError(ValueError):
    """Source model cannot be mapped as requested."""


@dataclass(frozen=True)
class MappingReport:
    kind: str
    num_encoding_gates: int
    added_qubits: int
    added_gates: int
    precision_bits: int | None = None
    repetitions: int | None = None
    acceptance_probability: float = 1.0
    observable_rescale: float = 1.0
    guaranteed_error: float = 0.0
    observable_norm: float = 0.0
    requested: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# lowering to RZ encoding gates


def _basis_change(q: int, letter: str) -> list[Gate]:
    """Gates B with B P B^dag = Z for P in {X, Y}; applied in list order."""
    if letter == "X":
        return [H(q)]
    if letter == "Y":
        return [RZ(q, -math.pi / 2), H(q)]
    return []


def _basis_undo(q: int, letter: str) -> list[Gate]:
    if letter == "X":
        return [H(q)]
    if letter == "Y":
        return [H(q), RZ(q, math.pi / 2)]
    return []


def lower_encoding_gates(circuit: Circuit) -> tuple[Circuit, list[int]]:
    """Rewrite every data-dependent gate as conjugations of one RZ(h(x)).

    Returns the rewritten circuit and the gate positions of its RZ encoding
    gates, in order. RX and RY become basis changes around RZ; a Pauli-string
    rotation becomes per-qubit basis changes plus a CNOT parity ladder onto
    its last non-identity qubit.
    """
    out: list[Gate] = []
    positions: list[int] = []
    for g in circuit.gates:
        if not g.is_encoding:
            out.append(g)
            continue
        if g.controls:
            raise MappingError(f"controlled data-dependent {g.kind} gates cannot be mapped")
        if g.angle.bit is not None:
            raise MappingError("bit-valued data angles cannot be mapped")
        if g.kind == "RZ":
            positions.append(len(out))
            out.append(g)
            continue
        if g.kind in ("RX", "RY"):
            targets, letters = g.targets, g.kind[1]
        elif g.kind == "PAULI":
            targets, letters = g.targets, g.pauli
        else:
            raise MappingError(f"{g.kind} is not a rotation")
        active = [(q, ch) for q, ch in zip(targets, letters) if ch != "I"]
        if not active:
            continue  # identity generator: a global phase
        pre: list[Gate] = []
        for q, ch in active:
            pre.extend(_basis_change(q, ch))
        ladder = [Gate("CNOT", (b,), (a,)) for (a, _), (b, _) in zip(active, active[1:])]
        last = active[-1][0]
        post: list[Gate] = list(reversed(ladder))
        for q, ch in active:
            post.extend(_basis_undo(q, ch))
        out.extend(pre + ladder)
        positions.append(len(out))
        out.append(Gate("RZ", (last,), angle=g.angle))
        out.extend(post)
    lowered = Circuit(circuit.num_qubits, out, circuit.num_params, circuit.num_data)
    return lowered, positions


def _replace(lowered: Circuit, positions, replacement) -> list[Gate]:
    """Swap encoding gate number i for ``replacement(i, gate)``."""
    index = {pos: i for i, pos in enumerate(positions)}
    gates: list[Gate] = []
    for pos, g in enumerate(lowered.gates):
        if pos in index:
            gates.extend(replacement(index[pos], g))
        else:
            gates.append(g)
    return gates


def _check_budget(total: int, what: str):
    if total > MAX_QUBITS:
        raise CapacityError(f"{what} needs {total} qubits; the simulator budget is {MAX_QUBITS}")


# --------------------------------------------------------------------------
# approximate mapping


def precision_bits(num_gates: int, obs_norm: float, delta: float) -> int:
    """p = ceil(log2(2 sqrt(2) D ||O|| / delta)), at least 1."""
    if delta <= 0:
        raise MappingError("delta must be positive")
    return max(1, math.ceil(math.log2(2 * math.sqrt(2) * num_gates * obs_norm / delta)))


def approximation_error_bound(num_gates: int, obs_norm: float, p: int) -> float:
    """Worst-case |f_mapped - f| when every angle is rounded to p bits of a full turn.

    Each rounded angle is off by at most pi 2^-p, moving the state by a
    Fubini-Study angle of at most pi 2^-(p+1); an observable of norm ||O||
    then shifts by at most 2 ||O|| sin of the accumulated angle.
    """
    total_angle = num_gates * math.pi * 2.0 ** (-(p + 1))
    return 2 * obs_norm * math.sin(min(total_angle, math.pi / 2))


def map_approximate(src: ReuploadingModel, delta: float) -> tuple[ExplicitModel, MappingReport]:
    if delta <= 0:
        raise MappingError("delta must be positive")
    lowered, positions = lower_encoding_gates(src.circuit)
    n, D = lowered.num_qubits, len(positions)
    norm = src.observable.norm_bound()
    p = precision_bits(max(D, 1), norm, delta)
    recipes = [lowered.gates[pos].angle for pos in positions]
    enc = encodings.bitstring(D, p, period=2 * math.pi, num_working=n, components=recipes, num_data=src.arity)

    def controlled_rotations(i, g):
        q = g.targets[0]
        return [RZ(q, 2 * math.pi * 2.0 ** (-j), controls=(n + i * p + j - 1,)) for j in range(1, p + 1)]

    gates = _replace(lowered, positions, controlled_rotations)
    total = n + D * p
    variational = Circuit(total, gates, lowered.num_params, 0)
    obs = src.observable.padded(D * p)
    model = ExplicitModel(enc, variational, obs)
    report = MappingReport(
        kind="approximate",
        num_encoding_gates=D,
        added_qubits=D * p,
        added_gates=len(enc.circuit) + len(variational) - len(lowered),
        precision_bits=p,
        guaranteed_error=approximation_error_bound(D, norm, p),
        observable_norm=norm,
        requested=delta,
    )
    return model, report


# --------------------------------------------------------------------------
# exact mappings


def map_exact_simple(src: ReuploadingModel) -> tuple[ExplicitModel, MappingReport]:
    lowered, positions = lower_encoding_gates(src.circuit)
    n, D = lowered.num_qubits, len(positions)
    _check_budget(n + D, "simple teleportation mapping")
    recipes = [lowered.gates[pos].angle for pos in positions]
    enc = encodings.gadget_product(recipes, 1, num_working=n, num_data=src.arity)

    def teleport(i, g):
        return [Gate("CNOT", (n + i,), (g.targets[0],))]

    variational = Circuit(n + D, _replace(lowered, positions, teleport), lowered.num_params, 0)
    rescale = float(2**D)
    obs = src.observable.padded(D, projector=[(n + i, 0) for i in range(D)], scale_factor=rescale)
    report = MappingReport(
        kind="exact_simple",
        num_encoding_gates=D,
        added_qubits=D,
        added_gates=len(enc.circuit) + len(variational) - len(lowered),
        repetitions=1,
        acceptance_probability=2.0**-D,
        observable_rescale=rescale,
        observable_norm=src.observable.norm_bound(),
    )
    return ExplicitModel(enc, variational, obs), report


def nested_repetitions(num_gates: int, delta_prime: float) -> int:
    """Smallest N with (1 - 2^-N)^D >= 1 - delta'."""
    if not 0 < delta_prime < 1:
        raise MappingError("delta' must lie in (0, 1)")
    D = max(num_gates, 1)
    target = 1 - (1 - delta_prime) ** (1 / D)
    N = max(1, math.ceil(math.log2(1 / target) - 1e-12))
    while (1 - 2.0**-N) ** D < 1 - delta_prime - 1e-15:
        N += 1
    return N


def map_exact_nested(src: ReuploadingModel, delta_prime: float) -> tuple[ExplicitModel, MappingReport]:
    lowered, positions = lower_encoding_gates(src.circuit)
    n, D = lowered.num_qubits, len(positions)
    N = nested_repetitions(D, delta_prime)
    total = n + D * (N + 1)
    _check_budget(total, f"nested teleportation mapping with N={N}")
    recipes = [lowered.gates[pos].angle for pos in positions]
    enc = encodings.gadget_product(recipes, N, num_working=n, num_witnesses=D, num_data=src.arity)
    base = n + D

    def cascade(i, g):
        q = g.targets[0]
        ancillas = [base + i * N + j for j in range(N)]
        gates = [Gate("CNOT", (a,), (q,) + tuple(ancillas[:j])) for j, a in enumerate(ancillas)]
        # the witness flips only when every teleportation attempt failed
        gates.append(Gate("CNOT", (n + i,), tuple(ancillas)))
        return gates

    variational = Circuit(total, _replace(lowered, positions, cascade), lowered.num_params, 0)
    p_acc = (1 - 2.0**-N) ** D
    obs = src.observable.padded(D * (N + 1), projector=[(n + i, 0) for i in range(D)], scale_factor=1 / p_acc)
    report = MappingReport(
        kind="exact_nested",
        num_encoding_gates=D,
        added_qubits=D * (N + 1),
        added_gates=len(enc.circuit) + len(variational) - len(lowered),
        repetitions=N,
        acceptance_probability=p_acc,
        observable_rescale=1 / p_acc,
        observable_norm=src.observable.norm_bound(),
        requested=delta_prime,
    )
    return ExplicitModel(enc, variational, obs), report


# --------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class EquivalenceReport:
    trials: int
    max_abs_diff: float
    tol: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def verify_equivalence(a, b, trials: int = 50, tol: float = 1e-9, rng_seed: int = 0) -> EquivalenceReport:
    """Compare two models on ``trials`` random (x, theta) drawn uniformly from [0, 2 pi)."""
    if a.arity != b.arity or a.num_params != b.num_params:
        raise MappingError(
            f"models disagree on arity ({a.arity} vs {b.arity}) or parameters ({a.num_params} vs {b.num_params})"
        )
    rng = np.random.default_rng(rng_seed)
    X = rng.uniform(0, 2 * math.pi, size=(trials, a.arity))
    theta = rng.uniform(0, 2 * math.pi, size=(trials, a.num_params))
    diff = np.abs(a.evaluate(theta, X) - b.evaluate(theta, X))
    worst = float(diff.max()) if trials else 0.0
    return EquivalenceReport(trials, worst, tol, worst <= tol)
