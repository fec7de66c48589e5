"""JSON documents for circuits, observables, encodings and models.

The schema is documented in the README. Loading validates every field and
reports problems by JSON path (for example ``gates[3].angle.source``), plus
the line number for malformed JSON text.
"""

from __future__ import annotations

import json
from pathlib import Path

from .encodings import FeatureEncoding
from .models import ExplicitModel, ReuploadingModel
from .simulator import GATE_KINDS, Angle, Circuit, Gate, Observable, SimulatorError

CIRCUIT_FORMAT = "qmlbk.circuit/1"
MODEL_FORMAT = "qmlbk.model/1"


class SchemaError(ValueError):
    def __init__(self, path: str, message: str, line: int | None = None):
        where = f"{path}" + (f" (line {line})" if line is not None else "")
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


def _require(doc, key, path, kind=None):
    if not isinstance(doc, dict):
        raise SchemaError(path, "expected an object")
    if key not in doc:
        raise SchemaError(f"{path}.{key}", "missing required field")
    value = doc[key]
    if kind is not None and (not isinstance(value, kind) or (isinstance(value, bool) and kind is int)):
        raise SchemaError(f"{path}.{key}", f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    return value


def _only(doc, allowed, path):
    extra = sorted(set(doc) - set(allowed))
    if extra:
        raise SchemaError(path, f"unknown field(s) {extra}")


# --------------------------------------------------------------------------
# angles and gates


def angle_to_dict(a: Angle) -> dict:
    out = {"source": a.source, "index": list(a.index), "scale": a.scale, "offset": a.offset}
    if a.bit is not None:
        out["bit"] = list(a.bit)
        out["period"] = a.period
    return out


def angle_from_dict(doc, path="angle") -> Angle:
    _only(doc, ("source", "index", "scale", "offset", "bit", "period"), path)
    source = _require(doc, "source", path, str)
    index = doc.get("index", [])
    if not isinstance(index, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in index):
        raise SchemaError(f"{path}.index", "expected a list of integers")
    for key in ("scale", "offset", "period"):
        if key in doc and (not isinstance(doc[key], (int, float)) or isinstance(doc[key], bool)):
            raise SchemaError(f"{path}.{key}", "expected a number")
    bit = doc.get("bit")
    if bit is not None and (not isinstance(bit, list) or len(bit) != 2):
        raise SchemaError(f"{path}.bit", "expected [position, precision]")
    try:
        return Angle(
            source,
            tuple(index),
            float(doc.get("scale", 1.0)),
            float(doc.get("offset", 0.0)),
            tuple(bit) if bit is not None else None,
            float(doc.get("period", 1.0)),
        )
    except SimulatorError as exc:
        raise SchemaError(path, str(exc)) from None


def gate_to_dict(g: Gate) -> dict:
    out = {"kind": g.kind, "targets": list(g.targets)}
    if g.controls:
        out["controls"] = list(g.controls)
    if g.angle is not None:
        out["angle"] = angle_to_dict(g.angle)
    if g.pauli is not None:
        out["pauli"] = g.pauli
    return out


def gate_from_dict(doc, path) -> Gate:
    _only(doc, ("kind", "targets", "controls", "angle", "pauli"), path)
    kind = _require(doc, "kind", path, str)
    if kind not in GATE_KINDS:
        raise SchemaError(f"{path}.kind", f"unknown gate kind {kind!r}; expected one of {list(GATE_KINDS)}")
    targets = _require(doc, "targets", path, list)
    controls = doc.get("controls", [])
    for key, vals in (("targets", targets), ("controls", controls)):
        if not isinstance(vals, list) or not all(isinstance(q, int) and not isinstance(q, bool) for q in vals):
            raise SchemaError(f"{path}.{key}", "expected a list of integers")
    angle = angle_from_dict(doc["angle"], f"{path}.angle") if "angle" in doc else None
    try:
        return Gate(kind, tuple(targets), tuple(controls), angle, doc.get("pauli"))
    except SimulatorError as exc:
        raise SchemaError(path, str(exc)) from None


def circuit_to_dict(c: Circuit) -> dict:
    return {
        "format": CIRCUIT_FORMAT,
        "num_qubits": c.num_qubits,
        "num_params": c.num_params,
        "num_data": c.num_data,
        "gates": [gate_to_dict(g) for g in c.gates],
    }


def circuit_from_dict(doc, path="circuit") -> Circuit:
    _only(doc, ("format", "num_qubits", "num_params", "num_data", "gates"), path)
    fmt = doc.get("format", CIRCUIT_FORMAT)
    if fmt != CIRCUIT_FORMAT:
        raise SchemaError(f"{path}.format", f"expected {CIRCUIT_FORMAT!r}, got {fmt!r}")
    n = _require(doc, "num_qubits", path, int)
    gates_doc = _require(doc, "gates", path, list)
    gates = [gate_from_dict(g, f"{path}.gates[{i}]") for i, g in enumerate(gates_doc)]
    try:
        return Circuit(n, gates, int(doc.get("num_params", 0)), int(doc.get("num_data", 0)))
    except SimulatorError as exc:
        raise SchemaError(path, str(exc)) from None


def observable_to_dict(o: Observable) -> dict:
    out = {"num_qubits": o.num_qubits, "terms": [[w, p] for w, p in o.terms]}
    if o.projector:
        out["projector"] = [list(pb) for pb in o.projector]
    if o.scale != 1.0:
        out["scale"] = o.scale
    return out


def observable_from_dict(doc, path="observable") -> Observable:
    _only(doc, ("num_qubits", "terms", "projector", "scale"), path)
    n = _require(doc, "num_qubits", path, int)
    terms = _require(doc, "terms", path, list)
    for i, t in enumerate(terms):
        if not (isinstance(t, list) and len(t) == 2 and isinstance(t[0], (int, float)) and isinstance(t[1], str)):
            raise SchemaError(f"{path}.terms[{i}]", "expected [weight, pauli_string]")
    try:
        return Observable(n, tuple(tuple(t) for t in terms), tuple(tuple(p) for p in doc.get("projector", [])), float(doc.get("scale", 1.0)))
    except (SimulatorError, TypeError) as exc:
        raise SchemaError(path, str(exc)) from None


def encoding_to_dict(e: FeatureEncoding) -> dict:
    info = {}
    for key, value in e.info.items():
        if isinstance(value, tuple) and value and isinstance(value[0], Angle):
            info[key] = [angle_to_dict(a) for a in value]
        else:
            info[key] = value
    return {"kind": e.kind, "circuit": circuit_to_dict(e.circuit), "info": info}


def encoding_from_dict(doc, path="encoding") -> FeatureEncoding:
    _only(doc, ("kind", "circuit", "info"), path)
    kind = _require(doc, "kind", path, str)
    circuit = circuit_from_dict(_require(doc, "circuit", path, dict), f"{path}.circuit")
    info = dict(doc.get("info", {}))
    for key in ("components", "angles"):
        if key in info:
            info[key] = tuple(angle_from_dict(a, f"{path}.info.{key}[{i}]") for i, a in enumerate(info[key]))
    try:
        return FeatureEncoding(kind, circuit, info)
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


def model_to_dict(m) -> dict:
    if isinstance(m, ReuploadingModel):
        return {
            "format": MODEL_FORMAT,
            "family": "reuploading",
            "circuit": circuit_to_dict(m.circuit),
            "observable": observable_to_dict(m.observable),
        }
    if isinstance(m, ExplicitModel):
        return {
            "format": MODEL_FORMAT,
            "family": "explicit",
            "encoding": encoding_to_dict(m.encoding),
            "variational": circuit_to_dict(m.variational),
            "observable": observable_to_dict(m.observable),
            "weight": m.weight,
        }
    raise TypeError(f"cannot serialize {type(m).__name__}")


def model_from_dict(doc, path="$"):
    if not isinstance(doc, dict):
        raise SchemaError(path, "expected an object")
    fmt = doc.get("format", MODEL_FORMAT)
    if fmt != MODEL_FORMAT:
        raise SchemaError(f"{path}.format", f"expected {MODEL_FORMAT!r}, got {fmt!r}")
    family = _require(doc, "family", path, str)
    if family == "reuploading":
        _only(doc, ("format", "family", "circuit", "observable"), path)
        circuit = circuit_from_dict(_require(doc, "circuit", path, dict), f"{path}.circuit")
        obs = observable_from_dict(_require(doc, "observable", path, dict), f"{path}.observable")
        try:
            return ReuploadingModel(circuit, obs, warn_degenerate=False)
        except ValueError as exc:
            raise SchemaError(path, str(exc)) from None
    if family == "explicit":
        _only(doc, ("format", "family", "encoding", "variational", "observable", "weight"), path)
        enc = encoding_from_dict(_require(doc, "encoding", path, dict), f"{path}.encoding")
        var = circuit_from_dict(_require(doc, "variational", path, dict), f"{path}.variational")
        obs = observable_from_dict(_require(doc, "observable", path, dict), f"{path}.observable")
        try:
            return ExplicitModel(enc, var, obs, float(doc.get("weight", 1.0)))
        except ValueError as exc:
            raise SchemaError(path, str(exc)) from None
    raise SchemaError(f"{path}.family", f"unknown model family {family!r}; expected 'reuploading' or 'explicit'")


def loads_model(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", exc.msg, exc.lineno) from None
    return model_from_dict(doc)


def load_model(path):
    return loads_model(Path(path).read_text())


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
