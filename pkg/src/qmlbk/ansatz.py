"""Variational circuit families."""

from __future__ import annotations

from .simulator import CZ, Angle, Circuit, Gate, PauliRotation

# layers per qubit count, chosen so that 3 * n * L stays close to 90
LAYER_TABLE = {2: 15, 3: 10, 4: 7, 5: 6, 6: 5, 7: 4, 8: 4, 9: 3, 10: 3, 11: 3, 12: 3}


def layer_schedule(n: int) -> int:
    try:
        return LAYER_TABLE[n]
    except KeyError:
        raise ValueError(f"no layer count tabulated for n={n}; supported range is 2..12") from None


def hea_slot(layer: int, qubit: int, axis: int, n: int) -> int:
    """Parameter slot of the ``axis``-th rotation (0: RZ, 1: RY, 2: RX) on ``qubit`` in ``layer``."""
    return (layer * n + qubit) * 3 + axis


def hardware_efficient(n: int, layers: int, num_data: int = 0) -> Circuit:
    """Per layer: RX RY RZ on every qubit (RZ applied first), then CZ on (i, i+1)."""
    if n < 1 or layers < 1:
        raise ValueError("hardware-efficient ansatz needs n >= 1 and L >= 1")
    gates = []
    for layer in range(layers):
        for q in range(n):
            for axis, kind in enumerate(("RZ", "RY", "RX")):
                gates.append(Gate(kind, (q,), angle=Angle.param(hea_slot(layer, q, axis, n))))
        for q in range(n - 1):
            gates.append(CZ(q, q + 1))
    return Circuit(n, gates, 3 * n * layers, num_data)


def heisenberg_pairs(n: int) -> list[tuple[int, int]]:
    return [(j, (j + 1) % n) for j in range(n)]


def heisenberg(n: int, layers: int, num_data: int = 0) -> Circuit:
    """Per layer and circular neighbour pair: exp(i t0 ZZ) exp(i t1 YY) exp(i t2 XX).

    The XX factor acts first. Each factor exp(i t P) is the rotation
    exp(-i a P / 2) with a = -2 t.
    """
    if n < 2 or layers < 1:
        raise ValueError("Heisenberg ansatz needs n >= 2 and L >= 1")
    gates = []
    slot = 0
    for _ in range(layers):
        for a, b in heisenberg_pairs(n):
            base = slot
            for offset, label in ((2, "XX"), (1, "YY"), (0, "ZZ")):
                gates.append(PauliRotation((a, b), label, Angle.param(base + offset, scale=-2.0)))
            slot += 3
    return Circuit(n, gates, 3 * n * layers, num_data)


def build(kind: str, n: int, layers: int, num_data: int = 0) -> Circuit:
    if kind == "hea":
        return hardware_efficient(n, layers, num_data)
    if kind == "heisenberg":
        return heisenberg(n, layers, num_data)
    raise ValueError(f"unknown ansatz kind {kind!r}; expected 'hea' or 'heisenberg'")
