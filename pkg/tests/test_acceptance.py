"""The twelve acceptance criteria, each at its stated tolerance and runtime budget.

Every test prints one ``PASS``/``FAIL`` line (repeated in the terminal
summary). Criterion 11 is a soft trend check: it warns instead of failing.
"""

import itertools
import json
import math
import time
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from qmlbk import cli, encodings
from qmlbk.data import build_regression_data, synthetic_pools
from qmlbk.learning import TrainConfig, model_jacobian, parity_learn, parity_sample_size
from qmlbk.mappings import (
    map_approximate,
    map_exact_nested,
    map_exact_simple,
    nested_repetitions,
    precision_bits,
    verify_equivalence,
)
from qmlbk.models import ImplicitModel, ReuploadingModel, random_reuploading_model
from qmlbk.regression import run_regression
from qmlbk.selftest import default_fixtures
from qmlbk.separation import (
    PARITY_INPUT_SCALE,
    MixtureDistribution,
    ParityConcept,
    best_implicit_mse,
    best_linear_mse,
    parity_circuit_error,
    sparsity_for,
)
from qmlbk.simulator import RY, RZ, Angle, Circuit, Observable


class Clock:
    def __init__(self, budget):
        self.budget = budget
        self.start = time.perf_counter()

    @property
    def elapsed(self):
        return time.perf_counter() - self.start


def verdict(number, title, ok, detail, clock, soft=False):
    in_time = clock.elapsed < clock.budget
    passed = ok and in_time
    tag = "PASS" if passed else ("WARN" if soft else "FAIL")
    timing = f"{clock.elapsed:.1f}s of {clock.budget:.0f}s"
    line = f"{tag} criterion {number:2d} {title}: {detail} ({timing})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    if soft:
        if not passed:
            warnings.warn(line)
    else:
        assert ok, line
        assert in_time, line


# --------------------------------------------------------------------------
# shared regression runs for criteria 7 and 11

POOL = (2000, 500)
REGRESSION_SIZES = (200, 50, 50)


@pytest.fixture(scope="module")
def regression_runs():
    cache = {}

    def get(n, seed):
        if (n, seed) not in cache:
            rng = np.random.default_rng([seed, n])
            train, test = synthetic_pools(*POOL, rng)
            data = build_regression_data(n, rng, train, test, *REGRESSION_SIZES)
            rows = run_regression(data, TrainConfig(seed=seed), seed)
            cache[n, seed] = {(r["model"], r["metric"], r["param"]): float(r["value"]) for r in rows}
        return cache[n, seed]

    return get


def lookup(results, model, metric, param=None):
    return next(v for (m, k, p), v in results.items() if m == model and k == metric and (param is None or p == param))


# --------------------------------------------------------------------------
# 1-3: mappings


def test_criterion_01_exact_mapping_equality():
    clock = Clock(60)
    rng = np.random.default_rng(101)
    worst = 0.0
    ok = True
    for i in range(5):
        n, D = 1 + i % 2, 1 + i % 3
        src = random_reuploading_model(n, D, rng)
        for mapped, _ in (map_exact_simple(src), map_exact_nested(src, 0.5)):
            check = verify_equivalence(src, mapped, 50, 1e-9, rng_seed=i)
            worst = max(worst, check.max_abs_diff)
            ok &= check.passed
    verdict(1, "exact mappings", ok, f"max |diff| {worst:.2e} <= 1e-9 over 5 models x 50 points", clock)


def test_criterion_02_approximate_mapping_bound():
    clock = Clock(60)
    rng = np.random.default_rng(202)
    delta = 0.1
    worst, ok = 0.0, True
    for i, D in enumerate((1, 2, 3, 3)):
        src = random_reuploading_model(1 + i % 2, D, rng)
        norm = src.observable.norm_bound()
        mapped, report = map_approximate(src, delta)
        expected_p = math.ceil(math.log2(2 * math.sqrt(2) * D * norm / delta))
        ok &= report.precision_bits == expected_p == precision_bits(D, norm, delta)
        check = verify_equivalence(src, mapped, 200, delta, rng_seed=i)
        worst = max(worst, check.max_abs_diff)
        ok &= check.passed
    verdict(2, "approximate mapping", ok, f"max |diff| {worst:.4f} <= {delta}, p matches closed form", clock)


def test_criterion_03_nested_gadget_constants():
    clock = Clock(5)
    src = ReuploadingModel(
        Circuit(1, [RY(0, Angle.param(0)), RZ(0, Angle.data(0)), RY(0, Angle.param(1))], 2, 1), Observable.pauli("Z")
    )
    _, report = map_exact_nested(src, 0.1)
    ok = nested_repetitions(1, 0.1) == 4 and report.repetitions == 4 and report.acceptance_probability == 0.9375
    verdict(3, "nested constants", ok, f"N={report.repetitions}, p_acc={report.acceptance_probability}", clock)


# --------------------------------------------------------------------------
# 4-6: parity separation


def test_criterion_04_parity_representability():
    clock = Clock(120)
    rng = np.random.default_rng(404)
    worst = 0.0
    for d in range(1, 11):
        for _ in range(20):
            k = int(rng.integers(0, d + 1))
            A = tuple(sorted(rng.choice(d, size=k, replace=False).tolist()))
            worst = max(worst, parity_circuit_error(d, A))
    verdict(4, "parity circuits", worst < 1e-9, f"max error {worst:.2e} over d<=10, 20 subsets each", clock)


def test_criterion_05_parity_learning():
    clock = Clock(300)
    rng = np.random.default_rng(505)
    delta, trials = 0.1, 200
    floor = (1 - delta) - 3 * math.sqrt(delta * (1 - delta) / trials)
    rates = {}
    for d in (6, 8, 12):
        k = sparsity_for(d)
        wins = 0
        for _ in range(trials):
            A = tuple(sorted(rng.choice(d, size=k, replace=False).tolist()))
            res = parity_learn(MixtureDistribution(ParityConcept(d, A)), delta, rng)
            assert res.samples_used == parity_sample_size(d, delta)
            wins += res.success
        rates[d] = wins / trials
    ok = all(r >= floor for r in rates.values())
    detail = ", ".join(f"d={d}: {r:.3f}" for d, r in rates.items()) + f" (floor {floor:.3f})"
    verdict(5, "parity learning", ok, detail, clock)


def test_criterion_06_dimension_lower_bounds():
    clock = Clock(300)
    rng = np.random.default_rng(606)
    ok, slack = True, math.inf
    for d in (4, 6):
        k = sparsity_for(d)
        C = math.comb(d, k)
        for n in (1, 2):
            enc = encodings.havlicek(n, d, PARITY_INPUT_SCALE)
            eps = best_linear_mse(enc, d, k).epsilon_avg
            bound = 1 - 4**n / C
            ok &= eps >= bound - 1e-9
            slack = min(slack, eps - bound)
            for M in (1, 2, 4):
                eps_m = best_implicit_mse(enc, M, d, k, rng).epsilon_avg
                ok &= eps_m >= 1 - M / C - 1e-9
                slack = min(slack, eps_m - (1 - M / C))
    verdict(6, "dimension bounds", ok, f"smallest slack {slack:.3e} (>= -1e-9)", clock)


# --------------------------------------------------------------------------
# 7-11: learning


def test_criterion_07_representer_dominance(regression_runs):
    clock = Clock(600)
    ok, parts = True, []
    for n in (2, 4, 6):
        res = regression_runs(n, 0)
        implicit = lookup(res, "implicit", "train_loss", "lambda=0")
        explicit = lookup(res, "explicit", "train_loss")
        nonsingular = lookup(res, "implicit", "gram_min_eig") > 1e-10
        ok &= explicit >= implicit and (implicit <= 1e-6 or not nonsingular)
        parts.append(f"n={n}: implicit {implicit:.1e} vs explicit {explicit:.1e}")
    verdict(7, "representer dominance", ok, "; ".join(parts), clock)


def test_criterion_08_delta_kernel_overfitting():
    clock = Clock(5)
    rng = np.random.default_rng(808)
    p = 4
    grid = np.array(list(itertools.product(range(1 << p), repeat=2))) / (1 << p)
    order = rng.permutation(len(grid))
    support, held_out = grid[order[:20]], grid[order[20:120]]
    alpha = rng.normal(size=20)
    model = ImplicitModel(encodings.bitstring(2, p), support, alpha)
    ok = np.all(model.evaluate(held_out) == 0.0) and np.array_equal(model.evaluate(support), alpha)
    verdict(8, "delta kernel", bool(ok), "held-out outputs exactly 0, support outputs exactly alpha", clock)


def test_criterion_09_gradient_correctness():
    clock = Clock(60)
    rng = np.random.default_rng(909)
    h, worst = 1e-5, 0.0
    for i in range(20):
        model = random_reuploading_model(1 + i % 3, 1 + i % 2, rng)
        theta = rng.uniform(0, 2 * math.pi, model.num_params)
        X = rng.uniform(-2, 2, (3, model.arity))
        shift = model_jacobian(model, theta, X, method="shift")
        for j in range(model.num_params):
            e = np.zeros_like(theta)
            e[j] = h
            fd = (model.evaluate(theta + e, X) - model.evaluate(theta - e, X)) / (2 * h)
            worst = max(worst, float(np.abs(shift[:, j] - fd).max()))
    verdict(9, "gradients", worst <= 1e-6, f"max |shift - FD| {worst:.2e} over 20 models", clock)


def test_criterion_10_gram_properties():
    clock = Clock(60)
    rng = np.random.default_rng(1010)
    zoo = {
        "havlicek": encodings.havlicek(3),
        "bitstring": encodings.bitstring(2, 3),
        "gadget": encodings.gadget_product([Angle.data(0), Angle.data(1, scale=0.7)], 2),
        "parity_angles": encodings.parity_angles(3).bound(rng.uniform(0, math.pi, 3)),
        "constant": encodings.constant(2, 2),
    }
    ok, parts = True, []
    for name, enc in zoo.items():
        X = rng.uniform(-3, 3, (20, enc.arity))
        if name == "bitstring":
            X = rng.integers(0, 8, (20, enc.arity)) / 8
        K = encodings.gram_matrix(enc, X)
        asym = float(np.abs(K - K.T).max())
        min_eig = float(np.linalg.eigvalsh(K).min())
        diag = float(np.abs(np.diag(K) - 1).max())
        ok &= asym <= 1e-12 and min_eig >= -1e-9 and diag <= 1e-12
        parts.append(f"{name} min eig {min_eig:.1e}")
    verdict(10, "Gram matrices", ok, "; ".join(parts), clock)


def test_criterion_11_regression_trend(regression_runs):
    clock = Clock(900)
    seeds = (0, 1, 2)
    implicit = np.mean([lookup(regression_runs(6, s), "implicit", "test_loss", "lambda=0") for s in seeds])
    explicit = np.mean([lookup(regression_runs(6, s), "explicit", "test_loss") for s in seeds])
    detail = f"n=6 mean test loss implicit {implicit:.4f} vs explicit {explicit:.4f}"
    verdict(11, "regression trend (soft)", implicit >= explicit, detail, clock, soft=True)


# --------------------------------------------------------------------------
# 12: determinism


def test_criterion_12_determinism(tmp_path):
    clock = Clock(300)
    reg_config = tmp_path / "regression.json"
    reg_config.write_text(json.dumps({"synthetic_pool": [300, 100], "sizes": [30, 10, 10], "steps": 20}))
    d1 = str(default_fixtures() / "reuploading_d1.json")
    commands = {
        "map-approx": ["map", "--input", d1, "--kind", "approx", "--delta", "0.1"],
        "map-simple": ["map", "--input", d1, "--kind", "simple"],
        "map-nested": ["map", "--input", d1, "--kind", "nested", "--delta-prime", "0.1"],
        "parity": ["parity", "--d-list", "6,8", "--trials", "50"],
        "regression": ["regression", "--config", str(reg_config), "--synthetic", "--n-list", "2,3", "--label-seeds", "0,1"],
        "selftest": ["selftest"],
    }
    mismatched = []
    for name, argv in commands.items():
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / name / run
            assert cli.main([*argv, "--seed", "7", "-o", str(out)]) == 0
            outputs.append(
                {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file() and p.name != "manifest.json"}
            )
        if not outputs[0] or outputs[0] != outputs[1]:
            mismatched.append(name)
    detail = f"{len(commands)} commands rerun, mismatched: {mismatched or 'none'}"
    verdict(12, "determinism", not mismatched, detail, clock)
