"""Quick invariant suite run by ``qmlbk selftest``.

Each check returns a short detail string and raises ``AssertionError`` on
failure. Checks that read fixtures take them from the directory passed in,
so a damaged fixture shows up as a named failing property.
"""

from __future__ import annotations

import hashlib
import json
import math
import traceback
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from . import ansatz, data, encodings, learning, mappings, models, separation, serialization
from .simulator import (
    Angle,
    Gate,
    H,
    Observable,
    PauliRotation,
    RZ,
    Statevector,
    apply_gate,
    expectation,
    run_batch,
)

MODULES = ("simulator", "models", "mappings", "learning", "separation", "data")


def default_fixtures() -> Path:
    return Path(str(resources.files("qmlbk") / "fixtures"))


@dataclass(frozen=True)
class Check:
    module: str
    name: str
    func: Callable


REGISTRY: list[Check] = []


def check(module: str):
    def register(func):
        REGISTRY.append(Check(module, func.__name__, func))
        return func

    return register


def _constants(fx: Path) -> dict:
    return json.loads((fx / "expected_constants.json").read_text())


# --------------------------------------------------------------------------
# simulator


def _random_state(n, rng):
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return Statevector(n, v / np.linalg.norm(v))


@check("simulator")
def norm_preservation(fx, rng):
    gates = [
        Gate("H", (0,)), Gate("X", (1,)), Gate("Y", (2,)), Gate("Z", (0,)),
        Gate("RX", (1,), angle=Angle.const(0.3)), Gate("RY", (2,), angle=Angle.const(1.1)),
        Gate("RZ", (0,), angle=Angle.const(-2.0)), Gate("CNOT", (1,), (0,)), Gate("CZ", (2,), (1,)),
        PauliRotation((0, 2), "XY", 0.7), Gate("CNOT", (2,), (0, 1)),
    ]
    worst = 0.0
    for g in gates:
        for _ in range(20):
            s = apply_gate(_random_state(3, rng), g)
            worst = max(worst, abs(s.norm() - 1))
    assert worst <= 1e-12, f"norm drift {worst:.2e}"
    return f"max norm drift {worst:.1e}"


@check("simulator")
def inverse_roundtrip(fx, rng):
    m = models.random_reuploading_model(3, 3, rng)
    c = m.circuit.then(m.circuit.inverse())
    theta, x = rng.uniform(0, 6, m.num_params), rng.uniform(0, 6, (1, m.arity))
    psi = run_batch(c, theta, x)[0]
    fid = abs(psi[0]) ** 2
    assert fid >= 1 - 1e-10, f"fidelity {fid}"
    return f"fidelity {fid:.12f}"


@check("simulator")
def expectation_bounds(fx, rng):
    for _ in range(50):
        obs = models.random_observable(3, rng, 4)
        v = expectation(_random_state(3, rng), obs)
        assert abs(v) <= obs.norm_bound() + 1e-12
    return "50 random states within scale * sum|w|"


@check("simulator")
def gadget_state(fx, rng):
    x = 0.83
    a, b = 0.6, 0.8j
    psi = Statevector(2, np.kron([a, b], [1, 0]))
    apply_gate(psi, H(1))
    apply_gate(psi, RZ(1, x))
    apply_gate(psi, Gate("CNOT", (1,), (0,)))
    ref = (np.kron([a, b * np.exp(1j * x)], [1, 0]) + np.kron([a * np.exp(1j * x), b], [0, 1])) / math.sqrt(2)
    # agree up to a global phase
    overlap = abs(np.vdot(ref, psi.amplitudes))
    assert abs(overlap - 1) < 1e-12, f"overlap {overlap}"
    return "teleportation branch structure confirmed"


# --------------------------------------------------------------------------
# models


@check("models")
def kernel_symmetry(fx, rng):
    enc = encodings.havlicek(3)
    X, Y = rng.normal(size=(30, 3)), rng.normal(size=(30, 3))
    K1, K2 = encodings.cross_gram(enc, X, Y), encodings.cross_gram(enc, Y, X)
    gap = float(np.abs(K1 - K2.T).max())
    assert gap <= 1e-12, f"asymmetry {gap:.2e}"
    return f"max asymmetry {gap:.1e}"


@check("models")
def gram_psd(fx, rng):
    encs = [
        encodings.havlicek(2),
        encodings.bitstring(2, 3),
        encodings.gadget_product([Angle.data(0), Angle.data(1)], 2),
    ]
    worst = 0.0
    for enc in encs:
        K = encodings.gram_matrix(enc, rng.uniform(0, 2 * math.pi, (20, 2)))
        worst = min(worst, float(np.linalg.eigvalsh(K)[0]))
    assert worst >= -1e-9, f"min eigenvalue {worst:.2e}"
    return f"min eigenvalue {worst:.1e}"


@check("models")
def parity_exactness(fx, rng):
    worst = 0.0
    for d in range(1, 7):
        for k in range(d + 1):
            A = tuple(sorted(rng.choice(d, size=k, replace=False).tolist()))
            worst = max(worst, separation.parity_circuit_error(d, A))
    assert worst < 1e-9, f"error {worst:.2e}"
    return f"max error {worst:.1e} for d <= 6"


@check("models")
def implicit_dual_path(fx, rng):
    enc = encodings.havlicek(2)
    m = models.ImplicitModel(enc, rng.normal(size=(6, 2)), rng.normal(size=6))
    X = rng.normal(size=(10, 2))
    gap = float(np.abs(m.evaluate(X) - m.evaluate_observable(X)).max())
    assert gap <= 1e-10, f"gap {gap:.2e}"
    return f"kernel vs observable gap {gap:.1e}"


@check("models")
def delta_kernel_vanishing(fx, rng):
    enc = encodings.bitstring(2, 4)
    support = rng.integers(0, 16, (5, 2)) / 16
    m = models.ImplicitModel(enc, support, rng.normal(size=5))
    seen = {tuple(r) for r in support}
    queries = np.array([q for q in rng.integers(0, 16, (40, 2)) / 16 if tuple(q) not in seen])
    out = m.evaluate(queries)
    assert np.all(out == 0.0), "nonzero output off the support"
    return f"{len(queries)} off-support queries exactly 0"


@check("models")
def layer_table(fx, rng):
    table = _constants(fx)["layer_schedule"]
    for n, L in table.items():
        assert ansatz.layer_schedule(int(n)) == L, f"n={n}: {ansatz.layer_schedule(int(n))} != {L}"
    return "layer schedule matches fixture"


# --------------------------------------------------------------------------
# mappings


def _fixture_models(fx):
    return [serialization.load_model(fx / name) for name in ("reuploading_d1.json", "reuploading_d2.json")]


@check("mappings")
def exact_simple_equality(fx, rng):
    worst = 0.0
    for src in _fixture_models(fx):
        mapped, _ = mappings.map_exact_simple(src)
        worst = max(worst, mappings.verify_equivalence(src, mapped, 50, 1e-9, 1).max_abs_diff)
    assert worst <= 1e-9, f"deviation {worst:.2e}"
    return f"max deviation {worst:.1e}"


@check("mappings")
def exact_nested_equality(fx, rng):
    worst = 0.0
    for src in _fixture_models(fx):
        mapped, _ = mappings.map_exact_nested(src, 0.3)
        worst = max(worst, mappings.verify_equivalence(src, mapped, 50, 1e-9, 2).max_abs_diff)
    assert worst <= 1e-9, f"deviation {worst:.2e}"
    return f"max deviation {worst:.1e}"


@check("mappings")
def approximate_bound(fx, rng):
    worst = 0.0
    for src in _fixture_models(fx):
        mapped, _ = mappings.map_approximate(src, 0.1)
        worst = max(worst, mappings.verify_equivalence(src, mapped, 200, 0.1, 3).max_abs_diff)
    assert worst <= 0.1, f"deviation {worst:.3f}"
    return f"max deviation {worst:.4f}"


@check("mappings")
def resource_constants(fx, rng):
    c = _constants(fx)
    for row in c["nested_repetitions"]:
        N = mappings.nested_repetitions(row["D"], row["delta_prime"])
        assert N == row["N"], f"N={N} for {row}"
        assert abs((1 - 2.0**-N) ** row["D"] - row["p_acc"]) < 1e-12
    for row in c["precision_bits"]:
        p = mappings.precision_bits(row["D"], row["norm"], row["delta"])
        assert p == row["p"], f"p={p} for {row}"
    return "repetition and precision formulas match fixture"


# --------------------------------------------------------------------------
# learning


@check("learning")
def gradient_agreement(fx, rng):
    worst = 0.0
    for _ in range(3):
        m = models.random_reuploading_model(2, 2, rng)
        theta, X = rng.uniform(0, 6, m.num_params), rng.uniform(0, 6, (3, m.arity))
        shift = learning.model_jacobian(m, theta, X, "shift")
        h = 1e-5
        fd = np.stack(
            [(m.evaluate(theta + h * e, X) - m.evaluate(theta - h * e, X)) / (2 * h) for e in np.eye(m.num_params)],
            axis=1,
        )
        worst = max(worst, float(np.abs(shift - fd).max()))
    assert worst <= 1e-6, f"deviation {worst:.2e}"
    return f"shift vs finite difference {worst:.1e}"


@check("learning")
def krr_identity(fx, rng):
    y = rng.normal(size=7)
    assert np.allclose(learning.krr_fit(np.eye(7), y, 0.0), y, atol=1e-12)
    assert np.allclose(learning.krr_fit(np.eye(7), y, 1 / 7), y / 2, atol=1e-12)
    return "delta-kernel KRR solutions exact"


@check("learning")
def adam_determinism(fx, rng):
    m = models.ExplicitModel(encodings.havlicek(2), ansatz.hardware_efficient(2, 1), Observable.z(0, 2))
    ds = learning.Dataset(rng.normal(size=(10, 2)), rng.normal(size=10))
    cfg = learning.TrainConfig(steps=5, seed=11)
    a, b = learning.train_explicit(m, ds, cfg), learning.train_explicit(m, ds, cfg)
    assert a.trace == b.trace and np.array_equal(a.theta, b.theta)
    return "identical traces for identical seeds"


@check("learning")
def parity_sample_formula(fx, rng):
    for row in _constants(fx)["parity_sample_size"]:
        M = learning.parity_sample_size(row["d"], row["delta"])
        assert M == row["M"], f"M={M} for {row}"
    return "sample-size formula matches fixture"


# --------------------------------------------------------------------------
# separation


@check("separation")
def parity_orthogonality(fx, rng):
    d = 6
    X = separation.all_inputs(d).astype(np.int64)
    subs = separation.subsets(d, 3)
    G = np.stack([np.prod(X[:, list(A)], axis=1) for A in subs])
    gram = G @ G.T
    assert np.array_equal(gram, (1 << d) * np.eye(len(subs), dtype=np.int64))
    return f"{len(subs)} parities orthogonal"


@check("separation")
def dimension_certificate(fx, rng):
    for d in (4, 6):
        k = separation.sparsity_for(d)
        for n in (1, 2):
            res = separation.best_linear_mse(encodings.havlicek(n, d, separation.PARITY_INPUT_SCALE), d, k)
            assert res.epsilon_avg >= res.bound - 1e-9
            assert res.epsilon_avg >= res.rank_bound - 1e-9
    return "dimension bounds hold for d in {4, 6}"


# --------------------------------------------------------------------------
# data


@check("data")
def idx_fixture(fx, rng):
    expected = _constants(fx)["two_images"]
    images = data.load_idx(fx / "two_images.idx")
    assert images.count == expected["count"], f"count {images.count}"
    digest = hashlib.sha256(images.images.tobytes()).hexdigest()
    assert digest == expected["pixel_sha256"], "pixel checksum mismatch"
    return "fixture parsed and checksum matches"


@check("data")
def pca_orthonormal(fx, rng):
    X = rng.normal(size=(200, 12)) @ rng.normal(size=(12, 12))
    pca = data.fit_pca(X, 5)
    gap = float(np.abs(pca.components @ pca.components.T - np.eye(5)).max())
    assert gap <= 1e-8 and np.all(np.diff(pca.variances) <= 0)
    return f"orthonormality gap {gap:.1e}"


@check("data")
def label_scale(fx, rng):
    X = rng.normal(size=(40, 2))
    label, _ = data.generate_labels(X, rng)
    std = float(label(X).std())
    assert abs(std - 1) <= 1e-10, f"std {std}"
    return f"training label std {std:.12f}"


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Outcome:
    module: str
    name: str
    passed: bool
    detail: str


def run(filter_modules=None, fixtures: Path | None = None, seed: int = 0) -> list[Outcome]:
    fx = Path(fixtures) if fixtures is not None else default_fixtures()
    wanted = set(filter_modules) if filter_modules else None
    if wanted is not None:
        unknown = wanted - set(MODULES)
        if unknown:
            raise ValueError(f"unknown module(s) {sorted(unknown)}; choose from {list(MODULES)}")
    outcomes = []
    for chk in REGISTRY:
        if wanted is not None and chk.module not in wanted:
            continue
        rng = np.random.default_rng(seed)
        try:
            detail = chk.func(fx, rng)
            outcomes.append(Outcome(chk.module, chk.name, True, detail))
        except Exception as exc:  # report every failure, keep going
            msg = str(exc) or type(exc).__name__
            if not isinstance(exc, AssertionError):
                msg = f"{type(exc).__name__}: {msg} [{traceback.extract_tb(exc.__traceback__)[-1].name}]"
            outcomes.append(Outcome(chk.module, chk.name, False, msg))
    return outcomes
