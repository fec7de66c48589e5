"""Command-line front end: ``qmlbk {map,parity,regression,selftest}``.

Every command reads an optional JSON config, applies flag overrides (flags
win), writes its outputs plus ``manifest.json`` into ``--output``, and exits
0 on success, 1 on a runtime failure, 2 on a usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__

SEED_ENV = "QMLBK_SEED"

DEFAULTS = {
    "map": {
        "input": None,
        "kind": None,
        "delta": None,
        "delta_prime": None,
        "trials": 50,
        "tol": None,
        "seed": 0,
        "output": "qmlbk-map",
    },
    "parity": {
        "d_list": [6],
        "delta": 0.1,
        "trials": 200,
        "n_list": [1, 2],
        "M_list": [1, 4],
        "oracle_max_d": 8,
        "seed": 0,
        "threads": None,
        "output": "qmlbk-parity",
    },
    "regression": {
        "n_list": [2, 4, 6],
        "sizes": [200, 50, 50],
        "label_seeds": [0],
        "steps": 500,
        "lr_params": 0.01,
        "lr_weight": 0.1,
        "ansatz": "hea",
        "train_images": None,
        "test_images": None,
        "synthetic": False,
        "synthetic_pool": [2000, 500],
        "seed": 0,
        "threads": None,
        "output": "qmlbk-regression",
    },
    "selftest": {
        "filter": None,
        "fixtures": None,
        "seed": 0,
        "output": None,
    },
}

MAP_KINDS = ("approx", "simple", "nested")


class UsageError(Exception):
    """Bad flags or config; exit code 2."""


# --------------------------------------------------------------------------
# argument handling


def _csv_ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _csv_words(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmlbk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qmlbk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="JSON config file; flags override its fields")
        p.add_argument("--seed", type=int)
        p.add_argument("--output", "-o", help="output directory")

    p = sub.add_parser("map", help="rewrite a re-uploading model as an explicit model")
    common(p)
    p.add_argument("--input", help="re-uploading model JSON")
    p.add_argument("--kind", choices=MAP_KINDS)
    p.add_argument("--delta", type=float, help="approximation tolerance (approx)")
    p.add_argument("--delta-prime", dest="delta_prime", type=float, help="rejection budget (nested)")
    p.add_argument("--trials", type=int)
    p.add_argument("--tol", type=float, help="equivalence tolerance (default 1e-9 exact, delta approx)")

    p = sub.add_parser("parity", help="parity separation experiment")
    common(p)
    p.add_argument("--d-list", dest="d_list", type=_csv_ints)
    p.add_argument("--delta", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--n-list", dest="n_list", type=_csv_ints)
    p.add_argument("--M-list", dest="M_list", type=_csv_ints)
    p.add_argument("--oracle-max-d", dest="oracle_max_d", type=int)
    p.add_argument("--threads", type=int)

    p = sub.add_parser("regression", help="explicit vs implicit vs classical regression")
    common(p)
    p.add_argument("--n-list", dest="n_list", type=_csv_ints)
    p.add_argument("--sizes", type=_csv_ints, help="M_train,M_val,M_test")
    p.add_argument("--label-seeds", dest="label_seeds", type=_csv_ints)
    p.add_argument("--steps", type=int)
    p.add_argument("--ansatz", choices=("hea", "heisenberg"))
    p.add_argument("--train-images", dest="train_images")
    p.add_argument("--test-images", dest="test_images")
    p.add_argument("--synthetic", action="store_true", default=None, help="use generated images if no files given")
    p.add_argument("--threads", type=int)

    p = sub.add_parser("selftest", help="run the built-in invariant suite")
    common(p)
    p.add_argument("--filter", type=_csv_words, help="comma-separated module names")
    p.add_argument("--fixtures", help="fixture directory (defaults to the bundled one)")
    return parser


def resolve_config(args) -> dict:
    cmd = args.command
    cfg = dict(DEFAULTS[cmd])
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file {args.config} not found") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(loaded, dict):
            raise UsageError(f"{args.config}: top level must be an object")
        loaded = dict(loaded)
        if loaded.pop("command", cmd) != cmd:
            raise UsageError(f"{args.config} is a config for a different command")
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise UsageError(f"{args.config}: unknown key(s) {unknown}; allowed: {sorted(cfg)}")
        cfg.update(loaded)
    if os.environ.get(SEED_ENV):
        try:
            cfg["seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer") from None
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


# --------------------------------------------------------------------------
# helpers


def _child_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def _ordered_map(func, items, threads):
    threads = threads or os.cpu_count() or 1
    if threads <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def _write_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, rows, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _manifest(out: Path, cmd: str, cfg: dict, started: float, files: list[str]):
    _write_json(
        out / "manifest.json",
        {
            "command": cmd,
            "config": cfg,
            "seed": cfg.get("seed"),
            "code_version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "outputs": sorted(files),
            "wall_time_seconds": round(time.time() - started, 3),
        },
    )


def _require_positive_int(cfg, key):
    v = cfg[key]
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise UsageError(f"{key} must be a positive integer, got {v!r}")


# --------------------------------------------------------------------------
# commands


def cmd_map(cfg: dict, out: Path) -> list[str]:
    from . import mappings, serialization

    if cfg["kind"] not in MAP_KINDS:
        raise UsageError(f"kind must be one of {list(MAP_KINDS)}, got {cfg['kind']!r}")
    if not cfg["input"]:
        raise UsageError("map needs --input (a re-uploading model JSON)")
    _require_positive_int(cfg, "trials")
    try:
        src = serialization.load_model(cfg["input"])
    except FileNotFoundError:
        raise UsageError(f"input file {cfg['input']} not found") from None
    except serialization.SchemaError as exc:
        raise UsageError(f"{cfg['input']}: {exc}") from None
    if not hasattr(src, "encoding_gates"):
        raise UsageError("map input must be a re-uploading model")
    if cfg["kind"] == "approx":
        if cfg["delta"] is None or cfg["delta"] <= 0:
            raise UsageError("approx mapping needs --delta > 0")
        mapped, report = mappings.map_approximate(src, cfg["delta"])
        tol = cfg["tol"] if cfg["tol"] is not None else cfg["delta"]
    elif cfg["kind"] == "simple":
        mapped, report = mappings.map_exact_simple(src)
        tol = cfg["tol"] if cfg["tol"] is not None else 1e-9
    else:
        dp = cfg["delta_prime"]
        if dp is None or not 0 < dp < 1:
            raise UsageError("nested mapping needs --delta-prime in (0, 1)")
        mapped, report = mappings.map_exact_nested(src, dp)
        tol = cfg["tol"] if cfg["tol"] is not None else 1e-9
    check = mappings.verify_equivalence(src, mapped, cfg["trials"], tol, cfg["seed"])
    (out / "mapped_model.json").write_text(serialization.dumps(serialization.model_to_dict(mapped)))
    _write_json(out / "mapping_report.json", report.to_dict())
    _write_json(out / "verification.json", check.to_dict())
    print(
        f"{report.kind}: +{report.added_qubits} qubits, p_acc={report.acceptance_probability:.6g}, "
        f"max|diff|={check.max_abs_diff:.3e} ({'pass' if check.passed else 'FAIL'})"
    )
    if not check.passed:
        raise RuntimeError(f"equivalence check failed: {check.max_abs_diff:.3e} > {tol}")
    return ["mapped_model.json", "mapping_report.json", "verification.json"]


def cmd_parity(cfg: dict, out: Path) -> list[str]:
    from . import separation

    d_list = cfg["d_list"]
    if not d_list:
        raise UsageError("parity needs a non-empty d list")
    if any(not isinstance(d, int) or not 1 <= d <= 20 for d in d_list):
        raise UsageError(f"d values must be integers in 1..20, got {d_list}")
    if not 0 < cfg["delta"] < 1:
        raise UsageError("delta must lie in (0, 1)")
    if cfg["oracle_max_d"] > separation.EXHAUSTIVE_MAX_D:
        raise UsageError(f"oracle_max_d may not exceed {separation.EXHAUSTIVE_MAX_D}")

    def one(item):
        idx, d = item
        return separation.run_separation_experiment(
            [d], cfg["delta"], _child_rng(cfg["seed"], idx), cfg["trials"], cfg["n_list"], cfg["M_list"], cfg["oracle_max_d"]
        )

    rows = [r for chunk in _ordered_map(one, list(enumerate(d_list)), cfg["threads"]) for r in chunk]
    separation.write_report(rows, out / "separation.csv")
    summary = {"rows": len(rows), "checks": []}
    ok = True
    for r in rows:
        if r["kind"] in ("explicit_oracle", "implicit_oracle"):
            holds = float(r["epsilon_avg"]) >= float(r["bound"]) - 1e-9
            summary["checks"].append({"kind": r["kind"], "d": r["d"], "n": r["n"], "M": r["M"], "bound_holds": holds})
            ok &= holds
        if r["kind"] == "learner":
            summary.setdefault("learner", []).append(
                {"d": r["d"], "success_rate": float(r["learner_success_rate"]), "samples_used": r["samples_used"]}
            )
    summary["all_bounds_hold"] = ok
    _write_json(out / "summary.json", summary)
    for item in summary.get("learner", []):
        print(f"d={item['d']}: learner success {item['success_rate']:.3f} with M={item['samples_used']}")
    print(f"oracle bounds {'hold' if ok else 'VIOLATED'}")
    return ["separation.csv", "summary.json"]


def _image_sources(cfg, rng):
    from . import data

    if cfg["train_images"] or cfg["test_images"]:
        if not (cfg["train_images"] and cfg["test_images"]):
            raise UsageError("give both --train-images and --test-images")
        return data.load_idx(cfg["train_images"]), data.load_idx(cfg["test_images"]), "idx"
    if not cfg["synthetic"]:
        raise RuntimeError("no image files given and synthetic fallback not selected (use --synthetic)")
    train_pool, test_pool = cfg["synthetic_pool"]
    return (*data.synthetic_pools(train_pool, test_pool, rng), "synthetic")


def cmd_regression(cfg: dict, out: Path) -> list[str]:
    from . import data, regression
    from .ansatz import LAYER_TABLE
    from .learning import TrainConfig

    if not cfg["n_list"]:
        raise UsageError("regression needs a non-empty n list")
    for n in cfg["n_list"]:
        if n not in LAYER_TABLE:
            raise UsageError(f"n={n} outside the supported range {min(LAYER_TABLE)}..{max(LAYER_TABLE)}")
    if len(cfg["sizes"]) != 3 or min(cfg["sizes"]) < 1:
        raise UsageError("sizes must be three positive integers M_train,M_val,M_test")
    train_imgs, test_imgs, source = _image_sources(cfg, _child_rng(cfg["seed"], 0))
    M_train, M_val, M_test = cfg["sizes"]
    tc = TrainConfig(steps=cfg["steps"], lr_params=cfg["lr_params"], lr_weight=cfg["lr_weight"], seed=cfg["seed"])
    units = [(n, s) for n in cfg["n_list"] for s in cfg["label_seeds"]]
    files = []

    def one(unit):
        n, s = unit
        rng = _child_rng(cfg["seed"], 1, n, s)
        ds = data.build_regression_data(
            n, rng, train_imgs, test_imgs, M_train, M_val, M_test, cfg["ansatz"]
        )
        rows = regression.run_regression(ds, tc, s)
        return ds, rows

    results = _ordered_map(one, units, cfg["threads"])
    all_rows = []
    for (n, s), (ds, rows) in zip(units, results):
        sub = f"data/n{n}_seed{s}"
        data.persist(ds, out / sub, cfg["seed"])
        files += [f"{sub}/{name}" for name in ("train.csv", "validation.csv", "test.csv", "dataset.json")]
        all_rows.extend(rows)
    _write_csv(out / "results.csv", all_rows, regression.REGRESSION_COLUMNS)
    files.append("results.csv")
    summary = {"source": source, "per_n": {}}
    for n in cfg["n_list"]:
        entry = {}
        for model in ("explicit", "implicit", "linear", "gaussian"):
            for metric in ("train_loss", "test_loss"):
                vals = [
                    float(r["value"])
                    for r in all_rows
                    if r["n"] == n and r["model"] == model and r["metric"] == metric
                    and (model != "implicit" or r["param"] == "lambda=0")
                ]
                entry[f"{model}_{metric}_mean"] = float(np.mean(vals))
        summary["per_n"][str(n)] = entry
        print(
            f"n={n}: train explicit {entry['explicit_train_loss_mean']:.4f} implicit {entry['implicit_train_loss_mean']:.2e} | "
            f"test explicit {entry['explicit_test_loss_mean']:.4f} implicit {entry['implicit_test_loss_mean']:.4f} "
            f"linear {entry['linear_test_loss_mean']:.4f} gaussian {entry['gaussian_test_loss_mean']:.4f}"
        )
    _write_json(out / "summary.json", summary)
    files.append("summary.json")
    return files


def cmd_selftest(cfg: dict, out: Path | None) -> list[str]:
    from . import selftest

    try:
        outcomes = selftest.run(cfg["filter"], cfg["fixtures"], cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    width = max((len(o.module) + len(o.name) for o in outcomes), default=0) + 1
    for o in outcomes:
        label = f"{o.module}.{o.name}"
        print(f"{'PASS' if o.passed else 'FAIL'}  {label:<{width}}  {o.detail}")
    failed = [o for o in outcomes if not o.passed]
    print(f"{len(outcomes) - len(failed)}/{len(outcomes)} properties passed")
    files = []
    if out is not None:
        _write_json(out / "selftest.json", [o.__dict__ for o in outcomes])
        files.append("selftest.json")
    if failed:
        raise RuntimeError("failing properties: " + ", ".join(f"{o.module}.{o.name}" for o in failed))
    return files


COMMANDS = {"map": cmd_map, "parity": cmd_parity, "regression": cmd_regression, "selftest": cmd_selftest}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.time()
    try:
        cfg = resolve_config(args)
        out = Path(cfg["output"]) if cfg.get("output") else None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[args.command](cfg, out)
        if out is not None:
            _manifest(out, args.command, cfg, started, files)
    except UsageError as exc:
        print(f"qmlbk {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"qmlbk {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
