import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

import dense
from qmlbk import ansatz, encodings
from qmlbk.encodings import EncodingError, cross_gram, encode, gram_matrix, kernel
from qmlbk.models import (
    ExplicitModel,
    ImplicitModel,
    ModelError,
    ReuploadingModel,
    parity_model,
    parity_parameters,
)
from qmlbk.separation import ParityConcept, all_inputs, parity_circuit_error
from qmlbk.simulator import RY, RZ, Angle, Circuit, H, Observable, run_circuit

SQ = 1 / math.sqrt(2)


def encoding_zoo():
    return {
        "havlicek": encodings.havlicek(2),
        "bitstring": encodings.bitstring(2, 3),
        "gadget": encodings.gadget_product([Angle.data(0), Angle.data(1, scale=0.7)], 2),
        "parity_angles": encodings.parity_angles(2).bound([0.4, 1.3]),
    }


# --------------------------------------------------------------------------
# encode


def test_bitstring_fixed_point_example():
    amps = encode(encodings.bitstring(1, 2), [0.75]).amplitudes
    assert abs(abs(amps[0b11]) - 1) < 1e-15


def test_bitstring_with_working_register():
    enc = encodings.bitstring(1, 2, num_working=2)
    amps = encode(enc, [0.25]).amplitudes
    assert abs(abs(amps[0b0001]) - 1) < 1e-15


def test_havlicek_at_origin_is_zero_state():
    # with U_z trivial the two Hadamard layers cancel
    np.testing.assert_allclose(np.abs(encode(encodings.havlicek(1), [0.0]).amplitudes), [1, 0], atol=1e-15)


def test_havlicek_quarter_input_gives_plus():
    amps = encode(encodings.havlicek(1), [0.25]).amplitudes
    assert abs(abs(np.vdot([SQ, SQ], amps)) - 1) < 1e-12


def test_havlicek_matches_dense_formula():
    rng = np.random.default_rng(0)
    x = rng.normal(size=3)
    Z = [dense.embed({i: dense.PAULI["Z"]}, 3) for i in range(3)]
    gen = sum(x[i] * Z[i] for i in range(3)) + sum(x[i] * x[j] * Z[i] @ Z[j] for i in range(3) for j in range(i + 1, 3))
    Uz = expm(-1j * math.pi * gen)
    Hn = dense.kron_all([dense.HADAMARD] * 3)
    ref = Uz @ Hn @ Uz @ Hn @ np.eye(8)[:, 0]
    amps = encode(encodings.havlicek(3), x).amplitudes
    assert abs(abs(np.vdot(ref, amps)) - 1) < 1e-12


def test_gadget_product_example():
    amps = encode(encodings.gadget_product([Angle.data(0)], 1, num_working=1), [math.pi]).amplitudes
    ancilla = np.array([np.exp(-0.5j * math.pi), np.exp(0.5j * math.pi)]) * SQ
    ref = np.kron([1, 0], ancilla)
    assert abs(abs(np.vdot(ref, amps)) - 1) < 1e-14


def test_encode_arity_mismatch():
    with pytest.raises(EncodingError):
        encode(encodings.havlicek(2), [0.1])


def test_encoding_rejects_parameters():
    with pytest.raises(EncodingError):
        encodings.custom(Circuit(1, [RY(0, Angle.param(0))], 1, 0))


# --------------------------------------------------------------------------
# explicit and re-uploading models


def test_explicit_identity_variational():
    m = ExplicitModel(encodings.havlicek(1), Circuit(1), Observable.pauli("Z"))
    assert abs(m.evaluate((), [[0.25]])[0]) < 1e-12


def test_explicit_weighted_rotation_to_eigenstate():
    m = ExplicitModel(encodings.havlicek(1), Circuit(1, [RY(0, Angle.param(0))], 1), Observable.pauli("Z"), weight=2.0)
    assert abs(m.evaluate([math.pi / 2], [[0.25]])[0] + 2) < 1e-12


def test_label_teacher_matches_dense_oracle():
    rng = np.random.default_rng(7)
    for n in (2, 3):
        teacher = ExplicitModel(encodings.havlicek(n), ansatz.hardware_efficient(n, 2), Observable.z(0, n), 1.7)
        theta = rng.uniform(0, 2 * math.pi, teacher.num_params)
        X = rng.normal(size=(5, n))
        got = teacher.evaluate(theta, X)
        for x, v in zip(X, got):
            psi = dense.run(teacher.circuit, theta, x)
            assert abs(v - 1.7 * dense.expect(psi, teacher.observable)) < 1e-10


def test_explicit_slot_mismatch():
    m = ExplicitModel(encodings.havlicek(1), Circuit(1, [RY(0, Angle.param(0))], 1), Observable.pauli("Z"))
    with pytest.raises(ModelError):
        m.evaluate([0.1, 0.2], [[0.0]])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.data())
def test_parity_circuit_computes_parity(d, data):
    A = data.draw(st.sets(st.integers(0, d - 1)))
    X = all_inputs(d)
    out = parity_model(d).evaluate(parity_parameters(A, d), X)
    np.testing.assert_allclose(out, ParityConcept(d, A)(X), atol=1e-12)


def test_parity_two_negative_bits():
    out = parity_model(2).evaluate(parity_parameters([0, 1], 2), [[-1.0, -1.0]])
    assert abs(out[0] - 1) < 1e-12


def test_parity_all_zero_parameters():
    X = all_inputs(4)
    out = parity_model(4).evaluate(np.zeros(4), X)
    np.testing.assert_allclose(out, 1.0, atol=1e-12)
    # oracle: 2x2 matrix product of the same gate sequence
    for x in X[:4]:
        psi = dense.run(parity_model(4).circuit, np.zeros(4), x)
        assert abs(dense.expect(psi, Observable.pauli("X")) - 1) < 1e-12


def test_parity_exactness_all_subsets():
    for d in range(1, 11):
        worst = max(parity_circuit_error(d, A) for k in range(d + 1) for A in itertools.combinations(range(d), k))
        assert worst < 1e-9, (d, worst)


def test_degenerate_reuploading_warns():
    c = Circuit(1, [RZ(0, Angle.data(0)), RY(0, Angle.param(0))], 1, 1)
    with pytest.warns(UserWarning):
        m = ReuploadingModel(c, Observable.pauli("Z"))
    assert m.is_degenerate
    c2 = Circuit(1, [RY(0, Angle.param(0)), RZ(0, Angle.data(0))], 1, 1)
    assert not ReuploadingModel(c2, Observable.pauli("Z")).is_degenerate


# --------------------------------------------------------------------------
# kernels


@pytest.mark.parametrize("kind", list(encoding_zoo()))
def test_self_kernel_is_one(kind):
    enc = encoding_zoo()[kind]
    x = np.random.default_rng(1).uniform(0, 2 * math.pi, enc.arity)
    assert abs(kernel(enc, x, x) - 1) < 1e-12


def test_bitstring_kernel_is_delta():
    enc = encodings.bitstring(2, 3)
    assert kernel(enc, [0.125, 0.5], [0.125, 0.5]) == 1.0
    assert kernel(enc, [0.125, 0.5], [0.25, 0.5]) == 0.0
    # same bit representation after rounding counts as identical
    assert kernel(enc, [0.125, 0.5], [0.13, 0.51]) == 1.0


@settings(max_examples=40, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10))
def test_gadget_kernel_closed_form(x, y):
    enc = encodings.gadget_product([Angle.data(0)], 1)
    sim = kernel(enc, [x], [y], method="simulate")
    assert abs(sim - math.cos((x - y) / 2) ** 2) < 1e-12
    assert abs(kernel(enc, [x], [y], method="analytic") - sim) < 1e-10


@pytest.mark.parametrize("kind", ["bitstring", "gadget"])
def test_analytic_kernels_agree_with_simulation(kind):
    enc = encoding_zoo()[kind]
    rng = np.random.default_rng(2)
    X, Y = rng.uniform(0, 1, (12, 2)), rng.uniform(0, 1, (9, 2))
    X[:3] = Y[:3]
    gap = np.abs(cross_gram(enc, X, Y, "analytic") - cross_gram(enc, X, Y, "simulate")).max()
    assert gap <= 1e-10


def test_gadget_off_diagonal_decreases_with_repetitions():
    x, y = [0.3, 1.1], [1.4, -0.2]
    values = [kernel(encodings.gadget_product([Angle.data(0), Angle.data(1)], N), x, y, "simulate") for N in (1, 2, 3)]
    assert values[0] > values[1] > values[2]


@pytest.mark.parametrize("kind", list(encoding_zoo()))
def test_kernel_symmetry(kind):
    enc = encoding_zoo()[kind]
    rng = np.random.default_rng(3)
    X, Y = rng.uniform(0, 2 * math.pi, (100, enc.arity)), rng.uniform(0, 2 * math.pi, (100, enc.arity))
    a = np.diag(cross_gram(enc, X, Y))
    b = np.diag(cross_gram(enc, Y, X))
    assert np.abs(a - b).max() <= 1e-12


@pytest.mark.parametrize("kind", list(encoding_zoo()))
def test_gram_psd_symmetric_unit_diagonal(kind):
    enc = encoding_zoo()[kind]
    K = gram_matrix(enc, np.random.default_rng(4).uniform(0, 2 * math.pi, (20, enc.arity)))
    assert np.array_equal(K, K.T)
    np.testing.assert_allclose(np.diag(K), 1.0, atol=1e-12)
    assert np.linalg.eigvalsh(K)[0] >= -1e-9


def test_gram_single_point():
    np.testing.assert_allclose(gram_matrix(encodings.havlicek(2), [[0.3, 0.4]]), [[1.0]], atol=1e-12)


def test_gram_bitstring_distinct_points_identity():
    np.testing.assert_array_equal(gram_matrix(encodings.bitstring(1, 3), [[0.125], [0.5]]), np.eye(2))


def test_gram_entries_match_kernel():
    enc = encodings.havlicek(2)
    X = np.random.default_rng(5).normal(size=(3, 2))
    K = gram_matrix(enc, X)
    for i in range(3):
        for j in range(3):
            assert abs(K[i, j] - kernel(enc, X[i], X[j])) <= 1e-15


def test_gram_needs_points():
    with pytest.raises(EncodingError):
        gram_matrix(encodings.havlicek(1), np.zeros((0, 1)))


# --------------------------------------------------------------------------
# implicit models


def test_implicit_single_support_point():
    m = ImplicitModel(encodings.havlicek(2), [[0.3, -0.2]], [1.0])
    assert abs(m.evaluate([[0.3, -0.2]])[0] - 1) < 1e-12


def test_implicit_bitstring_outside_support_is_zero():
    rng = np.random.default_rng(6)
    enc = encodings.bitstring(2, 4)
    support = rng.integers(0, 16, (10, 2)) / 16
    alpha = rng.normal(size=10) * 100
    m = ImplicitModel(enc, support, alpha)
    seen = {tuple(r) for r in support}
    queries = np.array([q for q in itertools.product(np.arange(16) / 16, repeat=2) if q not in seen])
    assert np.all(m.evaluate(queries) == 0.0)


def test_implicit_dual_path():
    rng = np.random.default_rng(7)
    for _ in range(10):
        m = ImplicitModel(encodings.havlicek(2), rng.normal(size=(6, 2)), rng.normal(size=6))
        X = rng.normal(size=(10, 2))
        assert np.abs(m.evaluate(X) - m.evaluate_observable(X)).max() <= 1e-10


def test_implicit_length_mismatch():
    with pytest.raises(ModelError):
        ImplicitModel(encodings.havlicek(1), [[0.1], [0.2]], [1.0])


# --------------------------------------------------------------------------
# ansatz families


def test_hea_two_qubits_one_layer():
    c = ansatz.hardware_efficient(2, 1)
    assert c.num_params == 6
    assert sum(g.kind == "CZ" for g in c.gates) == 1


def test_hea_single_qubit():
    c = ansatz.hardware_efficient(1, 1)
    assert c.num_params == 3
    assert not any(g.kind == "CZ" for g in c.gates)


def test_heisenberg_slots_and_pairs():
    c = ansatz.heisenberg(3, 2)
    assert c.num_params == 18
    assert ansatz.heisenberg_pairs(3) == [(0, 1), (1, 2), (2, 0)]
    assert {g.targets for g in c.gates} == {(0, 1), (1, 2), (2, 0)}


def test_hea_matches_dense_product():
    n, L = 2, 2
    theta = np.random.default_rng(8).uniform(0, 2 * math.pi, 3 * n * L)
    U = np.eye(4, dtype=complex)
    for layer in range(L):
        rots = []
        for q in range(n):
            t = [theta[ansatz.hea_slot(layer, q, a, n)] for a in range(3)]
            rots.append(
                expm(-0.5j * t[2] * dense.PAULI["X"]) @ expm(-0.5j * t[1] * dense.PAULI["Y"]) @ expm(-0.5j * t[0] * dense.PAULI["Z"])
            )
        U = np.diag([1, 1, 1, -1]) @ np.kron(*rots) @ U
    psi = run_circuit(ansatz.hardware_efficient(n, L), theta).amplitudes
    assert abs(abs(np.vdot(U[:, 0], psi)) - 1) < 1e-12


def test_heisenberg_matches_dense_product():
    n = 3
    theta = np.random.default_rng(9).uniform(0, 2 * math.pi, 3 * n)
    U = np.eye(8, dtype=complex)
    for p, (a, b) in enumerate(ansatz.heisenberg_pairs(n)):
        t = theta[3 * p : 3 * p + 3]
        for slot, letter in ((2, "X"), (1, "Y"), (0, "Z")):
            P = dense.embed({a: dense.PAULI[letter], b: dense.PAULI[letter]}, n)
            U = expm(1j * t[slot] * P) @ U
    psi0 = dense.kron_all([dense.HADAMARD] * 3) @ np.eye(8)[:, 0]
    c = Circuit(n, [H(q) for q in range(n)], 3 * n).then(ansatz.heisenberg(n, 1))
    psi = run_circuit(c, theta).amplitudes
    assert abs(np.vdot(U @ psi0, psi) - 1) < 1e-12


@pytest.mark.parametrize("n,L", [(2, 15), (7, 4), (12, 3)])
def test_layer_schedule_examples(n, L):
    assert ansatz.layer_schedule(n) == L


def test_layer_schedule_keeps_parameter_count_near_ninety():
    for n, L in ansatz.LAYER_TABLE.items():
        assert 80 <= 3 * n * L <= 108


@pytest.mark.parametrize("n", [1, 13])
def test_layer_schedule_outside_table(n):
    with pytest.raises(ValueError):
        ansatz.layer_schedule(n)


def test_encoding_bound_freezes_parameters():
    enc = encodings.parity_angles(3)
    theta = parity_parameters([0, 2], 3)
    frozen = enc.bound(theta)
    X = all_inputs(3)
    explicit = ExplicitModel(frozen, Circuit(1), Observable.pauli("X"))
    np.testing.assert_allclose(explicit.evaluate((), X), parity_model(3).evaluate(theta, X), atol=1e-14)
    with pytest.raises(EncodingError):
        enc.bound([0.0])
