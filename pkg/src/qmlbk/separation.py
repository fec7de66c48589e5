"""Parity concepts, the mixture input law, and brute-force best-fit oracles.

The oracles enumerate every input of {-1, 1}^d, build the real-linear span
of the functions a model family can express, and project the parity labels
onto it. The squared residual is the smallest mean squared error any member
of the family can reach, which is what the dimension bounds constrain.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import encodings
from .encodings import FeatureEncoding
from .learning import parity_learn, parity_sample_size
from .models import parity_model, parity_parameters
from .simulator import Angle, Circuit, Gate

ORACLE_MAX_D = 12
# Havlicek phases are multiples of 2 pi on {-1, 1}^d; shrinking the inputs keeps them informative
PARITY_INPUT_SCALE = 0.25
EXHAUSTIVE_MAX_D = 10
SUBSET_SAMPLES = 1000


@dataclass(frozen=True)
class ParityConcept:
    d: int
    support: tuple[int, ...]

    def __post_init__(self):
        support = tuple(sorted(int(i) for i in self.support))
        if len(set(support)) != len(support) or any(not 0 <= i < self.d for i in support):
            raise ValueError(f"support {support} is not a subset of range({self.d})")
        object.__setattr__(self, "support", support)

    @property
    def k(self) -> int:
        return len(self.support)

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X)
        if not self.support:
            return np.ones(X.shape[0])
        return np.prod(X[:, list(self.support)], axis=1).astype(float)


@dataclass(frozen=True)
class MixtureDistribution:
    """Half uniform on {-1,1}^d, half with the support bits tied to one shared random sign."""

    concept: ParityConcept

    @property
    def d(self) -> int:
        return self.concept.d

    @property
    def support(self) -> tuple[int, ...]:
        return self.concept.support

    def sample(self, count: int, rng: np.random.Generator):
        d = self.d
        X = rng.choice(np.array([-1.0, 1.0]), size=(count, d))
        tied = rng.random(count) < 0.5
        signs = rng.choice(np.array([-1.0, 1.0]), size=count)
        if self.support:
            cols = list(self.support)
            X[np.ix_(tied, cols)] = signs[tied, None]
        return X, self.concept(X)

    def probabilities(self, inputs: np.ndarray) -> np.ndarray:
        """Exact probability of each row of ``inputs`` under the mixture."""
        d, k = self.d, self.concept.k
        uniform = np.full(inputs.shape[0], 2.0**-d)
        if k == 0:
            return uniform
        block = inputs[:, list(self.support)]
        tied = np.all(block == block[:, :1], axis=1)
        correlated = np.where(tied, 0.5 * 2.0 ** -(d - k), 0.0)
        return 0.5 * uniform + 0.5 * correlated


def sparsity_for(d: int) -> int:
    """floor(d/2), moved up by one when it is even so the tied sign equals the label."""
    k = d // 2
    return k + 1 if k % 2 == 0 else k


def all_inputs(d: int) -> np.ndarray:
    """Every x in {-1,1}^d; row r has x_i = -1 exactly when bit i of r (most significant first) is 1."""
    r = np.arange(1 << d)[:, None]
    bits = (r >> np.arange(d - 1, -1, -1)) & 1
    return 1.0 - 2.0 * bits


def subsets(d: int, k: int, rng: np.random.Generator | None = None, limit: int = SUBSET_SAMPLES):
    """All k-subsets for d <= 10, else ``limit`` random ones (seeded)."""
    if d <= EXHAUSTIVE_MAX_D:
        return [tuple(c) for c in itertools.combinations(range(d), k)]
    rng = rng or np.random.default_rng(0)
    return [tuple(sorted(rng.choice(d, size=k, replace=False).tolist())) for _ in range(limit)]


def bit_product_encoding(n: int, d: int) -> FeatureEncoding:
    """Basis-state encoding of the first n bits: qubit i holds |0> for x_i = 1, |1> for x_i = -1."""
    gates = [Gate("RX", (i,), angle=Angle.data(i, scale=-math.pi / 2, offset=math.pi / 2)) for i in range(n)]
    return encodings.custom(Circuit(n, gates, 0, d))


# --------------------------------------------------------------------------
# span oracles


def density_features(states: np.ndarray) -> np.ndarray:
    """Real coordinates of |psi><psi|: Re rho_ab for a <= b and Im rho_ab for a < b.

    Every expectation Tr[rho O] with O Hermitian is a real-linear combination
    of these columns, so their span is the set of explicit model functions.
    """
    N = states.shape[1]
    iu = np.triu_indices(N)
    iu_strict = np.triu_indices(N, k=1)
    rho = states[:, :, None] * states[:, None, :].conj()
    return np.concatenate([rho[:, iu[0], iu[1]].real, rho[:, iu_strict[0], iu_strict[1]].imag], axis=1)


def _orthonormal_basis(features: np.ndarray, weights: np.ndarray, cutoff: float = 1e-10) -> np.ndarray:
    """Columns spanning the weighted column space of ``features``, orthonormal in L2(weights)."""
    root = np.sqrt(weights)[:, None]
    A = root * features
    if A.shape[1] == 0:
        return np.zeros((A.shape[0], 0))
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((A.shape[0], 0))
    return U[:, s > cutoff * s[0]]


def projection_residual(basis: np.ndarray, labels: np.ndarray, weights: np.ndarray) -> float:
    """min over the span of E_w[(f - g)^2], with ``basis`` orthonormal under the weights."""
    g = np.sqrt(weights) * labels
    coef = basis.T @ g
    return float(g @ g - coef @ coef)


@dataclass(frozen=True)
class OracleResult:
    epsilon_avg: float
    dimension: int
    num_concepts: int
    bound: float
    rank_bound: float

    @property
    def slack(self) -> float:
        return self.epsilon_avg - self.bound


def _check_budget(d: int, width: int):
    if d > ORACLE_MAX_D:
        raise ValueError(f"exhaustive oracle limited to d <= {ORACLE_MAX_D}, got d={d}")
    if (1 << d) * width > 1 << 26:
        raise ValueError(f"feature matrix of {1 << d} x {width} exceeds the memory budget")


def _average_residual(features, d, k, measure, rng):
    X = all_inputs(d)
    uniform = np.full(X.shape[0], 2.0**-d)
    total, dim, count = 0.0, 0, 0
    shared = _orthonormal_basis(features, uniform) if measure == "uniform" else None
    if shared is not None:
        dim = shared.shape[1]
    for A in subsets(d, k, rng):
        concept = ParityConcept(d, A)
        if measure == "uniform":
            basis, w = shared, uniform
        elif measure == "mixture":
            w = MixtureDistribution(concept).probabilities(X)
            basis = _orthonormal_basis(features, w)
            dim = max(dim, basis.shape[1])
        else:
            raise ValueError(f"unknown measure {measure!r}")
        total += projection_residual(basis, concept(X), w)
        count += 1
    return total / count, dim, count


def best_linear_mse(
    encoding: FeatureEncoding,
    d: int,
    k: int,
    measure: str = "uniform",
    rng: np.random.Generator | None = None,
) -> OracleResult:
    """Average over k-sparse parities of the best MSE reachable by any observable on ``encoding``."""
    n = encoding.num_qubits
    _check_budget(d, 4**n)
    states = encoding.states(all_inputs(d))
    eps, dim, count = _average_residual(density_features(states), d, k, measure, rng)
    N = math.comb(d, k)
    return OracleResult(eps, dim, count, 1 - 4**n / N, 1 - dim / N)


def best_implicit_mse(
    encoding: FeatureEncoding,
    M: int,
    d: int,
    k: int,
    rng: np.random.Generator,
    measure: str = "uniform",
    training=None,
) -> OracleResult:
    """Average best MSE over functions sum_m alpha_m k(., x_m) for M distinct training inputs."""
    _check_budget(d, M)
    X = all_inputs(d)
    if training is None:
        if M > X.shape[0]:
            raise ValueError(f"cannot draw {M} distinct inputs from {X.shape[0]}")
        training = X[rng.permutation(X.shape[0])[:M]]
    features = encodings.cross_gram(encoding, X, training)
    eps, dim, count = _average_residual(features, d, k, measure, rng)
    N = math.comb(d, k)
    return OracleResult(eps, dim, count, 1 - M / N, 1 - dim / N)


def parity_circuit_error(d: int, support) -> float:
    """Largest deviation of the parity circuit from g_A over all 2^d inputs."""
    X = all_inputs(d)
    model = parity_model(d)
    return float(np.max(np.abs(model.evaluate(parity_parameters(support, d), X) - ParityConcept(d, support)(X))))


# --------------------------------------------------------------------------
# experiment


REPORT_COLUMNS = ("kind", "d", "k", "n", "M", "epsilon_avg", "bound", "learner_success_rate", "samples_used")


def run_separation_experiment(
    d_list: Sequence[int],
    delta: float,
    rng: np.random.Generator,
    trials: int = 200,
    n_list: Sequence[int] = (1, 2),
    M_list: Sequence[int] = (1, 4),
    oracle_max_d: int = 8,
) -> list[dict]:
    """Per d: parity-learner success rate, oracle lower bounds, and parity-circuit exactness."""
    if not d_list:
        raise ValueError("d_list must not be empty")
    rows = []
    for d in d_list:
        if not 1 <= d <= 20:
            raise ValueError(f"d={d} outside the supported range 1..20")
        k = sparsity_for(d)
        successes = 0
        for _ in range(trials):
            A = tuple(sorted(rng.choice(d, size=k, replace=False).tolist()))
            successes += parity_learn(MixtureDistribution(ParityConcept(d, A)), delta, rng).success
        M = parity_sample_size(d, delta)
        rows.append(_row("learner", d, k, 1, M, "", 1 - delta, successes / trials if trials else "", M))
        if d > min(oracle_max_d, EXHAUSTIVE_MAX_D):
            continue
        A = tuple(sorted(rng.choice(d, size=k, replace=False).tolist()))
        err = parity_circuit_error(d, A)
        rows.append(_row("reuploading", d, k, 1, "", err**2, 0.0, "", ""))
        for n in n_list:
            res = best_linear_mse(encodings.havlicek(n, d, PARITY_INPUT_SCALE), d, k, rng=rng)
            rows.append(_row("explicit_oracle", d, k, n, "", res.epsilon_avg, res.bound, "", ""))
        for m in M_list:
            if m > 1 << d:
                continue
            res = best_implicit_mse(encodings.havlicek(max(n_list), d, PARITY_INPUT_SCALE), m, d, k, rng)
            rows.append(_row("implicit_oracle", d, k, max(n_list), m, res.epsilon_avg, res.bound, "", ""))
    return rows


def _row(kind, d, k, n, M, eps, bound, rate, samples):
    def fmt(v):
        return f"{v:.12g}" if isinstance(v, float) else v

    return {
        "kind": kind,
        "d": d,
        "k": k,
        "n": n,
        "M": M,
        "epsilon_avg": fmt(eps),
        "bound": fmt(bound),
        "learner_success_rate": fmt(rate),
        "samples_used": samples,
    }


def write_report(rows: list[dict], path: Path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
