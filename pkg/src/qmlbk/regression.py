"""Explicit vs implicit vs classical regression on quantum-teacher labels."""

from __future__ import annotations

import numpy as np

from . import ansatz as ansatz_mod
from . import encodings
from .data import RegressionData
from .learning import (
    C_GRID,
    TrainConfig,
    baseline_grid_search,
    krr_fit,
    mse,
    ridge_from_c,
    train_explicit,
)
from .models import ExplicitModel
from .simulator import Observable

REGRESSION_COLUMNS = ("n", "label_seed", "model", "param", "metric", "value")


def _row(n, seed, model, metric, value, param=""):
    return {
        "n": n,
        "label_seed": seed,
        "model": model,
        "param": param,
        "metric": metric,
        "value": repr(float(value)),
    }


def run_regression(data: RegressionData, cfg: TrainConfig, label_seed: int, c_grid=C_GRID) -> list[dict]:
    """Fit every model family on one dataset; return long-format result rows."""
    train, val, test = data.train, data.validation, data.test
    n = train.inputs.shape[1]
    rows = []

    enc = encodings.havlicek(n)
    explicit = ExplicitModel(enc, ansatz_mod.build(data.labels.ansatz, n, data.labels.layers), Observable.z(0, n))
    fit = train_explicit(explicit, train, cfg)
    for split in (train, val, test):
        pred = explicit.evaluate(fit.theta, split.inputs, weight=fit.weight)
        rows.append(_row(n, label_seed, "explicit", f"{split.split}_loss", mse(pred, split.labels)))
    rows.append(_row(n, label_seed, "explicit", "initial_train_loss", fit.trace[0]))

    K = encodings.gram_matrix(enc, train.inputs)
    K_val = encodings.cross_gram(enc, val.inputs, train.inputs)
    K_test = encodings.cross_gram(enc, test.inputs, train.inputs)
    eig = np.linalg.eigvalsh(K)
    rows.append(_row(n, label_seed, "implicit", "gram_min_eig", eig[0]))
    rows.append(_row(n, label_seed, "implicit", "gram_condition", eig[-1] / max(eig[0], 1e-300)))
    alpha = krr_fit(K, train.labels, 0.0)
    for split, Ks in ((train, K), (val, K_val), (test, K_test)):
        rows.append(_row(n, label_seed, "implicit", f"{split.split}_loss", mse(Ks @ alpha, split.labels), "lambda=0"))
    best = None
    for C in c_grid:
        a = krr_fit(K, train.labels, ridge_from_c(C, len(train)))
        losses = {s.split: mse(Ks @ a, s.labels) for s, Ks in ((train, K), (val, K_val), (test, K_test))}
        for split, value in losses.items():
            rows.append(_row(n, label_seed, "implicit_regularized", f"{split}_loss", value, f"C={C}"))
        if best is None or losses["validation"] < best[1]["validation"]:
            best = (C, losses)
    C, losses = best
    for split, value in losses.items():
        rows.append(_row(n, label_seed, "implicit_best_regularized", f"{split}_loss", value, f"C={C}"))

    for kind in ("linear", "gaussian"):
        res = baseline_grid_search(kind, train, val, c_grid)
        param = f"C={res.best['C']}" + ("" if res.gamma is None else f";gamma={res.gamma!r}")
        rows.append(_row(n, label_seed, kind, "train_loss", res.best["train_loss"], param))
        rows.append(_row(n, label_seed, kind, "validation_loss", res.best["val_loss"], param))
        rows.append(_row(n, label_seed, kind, "test_loss", mse(res.predict(test.inputs), test.labels), param))
    return rows
