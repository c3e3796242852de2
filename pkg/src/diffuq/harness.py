"""End-to-end experiment runner: data, fit, sample bank, calibration report.

One run writes a self-contained directory:

    config.json       resolved configuration snapshot
    bank.csv(.meta.json)  posterior sample bank with provenance
    report.json       CalibrationReport (raw-unit metrics)
    reliability.csv   (nominal, empirical) coverage pairs
    train_log.csv     per-iteration trace        (diffuq only)
    checkpoint.json/.bin  drift weights + SDE constants (diffuq only)
    manifest.json     sha256 of every other artifact

Every artifact except the wall-clock column of train_log.csv is a pure
function of the config, so a rerun reproduces report.json byte for byte.
Files are written to a temp name and renamed, so a crash never leaves a
half-written artifact behind.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import baselines, metrics
from .baselines import SampleBank
from .config import ExperimentConfig, apply_overrides, load_config
from .data import Dataset, load_csv, standardize_splits, synth_dataset
from .errors import ConfigError, DiffuqError
from .metrics import CalibrationReport
from .optim import OptimizerConfig
from .regression import HeteroModel, preset
from .sampler import new_drift, sample, save_checkpoint, train
from .targets import PosteriorTarget

__all__ = ["RunResult", "prepare_data", "build_model", "run_method",
           "run_experiment", "run_sweep", "collect_reports", "emit_report",
           "selftest"]

REPORT_NAME = "report.json"
CONFIG_NAME = "config.json"
BANK_NAME = "bank.csv"
MANIFEST_NAME = "manifest.json"


@dataclass
class RunResult:
    out_dir: Path
    config: ExperimentConfig
    bank: SampleBank
    report: CalibrationReport


def prepare_data(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Standardized (train, test) splits described by the config."""
    ds = config.dataset
    if ds["generator"] is not None:
        full = synth_dataset(ds["generator"], ds["n_train"] + ds["n_test"],
                             seed=config.seed, **ds["params"])
        train_raw = Dataset(full.X[:ds["n_train"]], full.y[:ds["n_train"]],
                            meta=dict(full.meta))
        test_raw = Dataset(full.X[ds["n_train"]:], full.y[ds["n_train"]:],
                           meta=dict(full.meta))
        return standardize_splits(train_raw, test_raw)
    return load_csv(ds["csv_path"], target_col=ds["target_col"],
                    feature_cols=ds["feature_cols"],
                    train_fraction=ds["train_fraction"])


def build_model(config: ExperimentConfig, n_features: int) -> HeteroModel:
    return preset(config.model["preset"], n_features)


def _opt(params: dict, lr_key="learning_rate", it_key="iterations"):
    return OptimizerConfig(learning_rate=params[lr_key],
                           max_iter=params[it_key])


def run_method(config: ExperimentConfig, model: HeteroModel,
               train_split: Dataset):
    """Fit the configured method; returns (bank, extras).

    ``extras`` maps artifact names to writer callables for method-specific
    outputs (train log, checkpoint).
    """
    posterior = PosteriorTarget(model, train_split.X, train_split.y)
    p = config.method_params
    seed = config.seed
    n = config.n_samples
    extras = {}

    if config.method == "diffuq":
        drift = new_drift(model.param_dim, seed=seed)
        fitted, log = train(drift, posterior, config.sde, _opt(p),
                            data_minibatch=p["data_minibatch"])
        draws = sample(fitted, config.sde, n)
        bank = SampleBank(draws, method="diffuq",
                          meta={"seed": seed, "gamma": config.sde.gamma,
                                "iterations": p["iterations"]})
        ext = "json" if config.checkpoint_format == "json" else "bin"
        extras[f"checkpoint.{ext}"] = lambda path: save_checkpoint(
            path, fitted, config.sde, fmt=config.checkpoint_format)
        extras["train_log.csv"] = log.to_csv
    elif config.method == "map":
        theta = baselines.map_fit(posterior, _opt(p), seed=seed)
        bank = SampleBank(theta[None, :], method="map", meta={"seed": seed})
    elif config.method == "ensemble":
        bank = baselines.ensemble_fit(posterior, n, _opt(p), seed=seed)
    elif config.method == "sgld":
        n_steps = p["n_steps"]
        if n_steps is None:
            n_steps = int(math.ceil(n * p["thin"] / (1.0 - p["burn_in"])))
        bank = baselines.sgld_sample(
            posterior, p["step_size"], n_steps, burn_in=p["burn_in"],
            thin=p["thin"], seed=seed, data_minibatch=p["data_minibatch"])
        if len(bank) > n:  # keep the freshest part of the chain
            bank = SampleBank(bank.samples[-n:], method=bank.method,
                              meta=bank.meta)
    elif config.method == "svgd":
        bank = baselines.svgd_sample(posterior, n, n_steps=p["n_steps"],
                                     step_size=p["step_size"], seed=seed,
                                     init_scale=p["init_scale"])
    elif config.method == "mfvi":
        mean, log_sd = baselines.mfvi_fit(posterior, _opt(p), seed=seed)
        bank = baselines.mfvi_sample(mean, log_sd, n, seed=seed)
    elif config.method == "mc_dropout":
        theta = baselines.mc_dropout_fit(model, train_split, rate=p["rate"],
                                         opt=_opt(p), seed=seed)
        bank = baselines.mc_dropout_sample(model, theta, n, rate=p["rate"],
                                           seed=seed)
    else:  # pragma: no cover - load_config already rejects these
        raise ConfigError(f"unknown method {config.method!r}")
    return bank, extras


def _atomic_write(path: Path, writer) -> None:
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    os.replace(tmp, path)


def _write_manifest(out_dir: Path) -> None:
    checksums = {}
    for child in sorted(out_dir.iterdir()):
        if child.name == MANIFEST_NAME or not child.is_file():
            continue
        checksums[child.name] = hashlib.sha256(child.read_bytes()).hexdigest()

    def write(path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"files": checksums}, fh, sort_keys=True, indent=1)
            fh.write("\n")

    _atomic_write(out_dir / MANIFEST_NAME, write)


def run_experiment(config: ExperimentConfig | dict | str | Path,
                   out_dir) -> RunResult:
    """Run one configured experiment and write its artifact directory."""
    if not isinstance(config, ExperimentConfig):
        config = load_config(config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    train_split, test_split = prepare_data(config)
    model = build_model(config, train_split.n_features)
    bank, extras = run_method(config, model, train_split)
    report = metrics.evaluate(bank, model, test_split, n_bins=config.n_bins,
                              meta={"name": config.name,
                                    "method": config.method,
                                    "seed": config.seed,
                                    "dataset": _dataset_tag(config)})

    _atomic_write(out_dir / CONFIG_NAME, config.save)
    _atomic_write(out_dir / BANK_NAME, bank.save_csv)
    # save_csv writes the sidecar next to its temp name; rename that too
    sidecar_tmp = out_dir / (BANK_NAME + ".tmp.meta.json")
    if sidecar_tmp.exists():
        os.replace(sidecar_tmp, out_dir / (BANK_NAME + ".meta.json"))
    _atomic_write(out_dir / REPORT_NAME, report.save)
    _atomic_write(out_dir / "reliability.csv", report.reliability_csv)
    for name, writer in extras.items():
        _atomic_write(out_dir / name, writer)
    _write_manifest(out_dir)
    return RunResult(out_dir, config, bank, report)


def _dataset_tag(config: ExperimentConfig) -> str:
    ds = config.dataset
    return ds["generator"] or Path(ds["csv_path"]).name


def _sanitize(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-=._" else "-" for c in str(text))


def run_sweep(config: ExperimentConfig | dict | str | Path, grid: dict,
              out_root) -> list[RunResult]:
    """Cartesian product of overrides; one run directory per combination."""
    if not isinstance(config, ExperimentConfig):
        config = load_config(config)
    if not grid:
        raise ConfigError("sweep needs at least one key=v1,v2,... axis")
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    keys = sorted(grid)
    results = []
    rows = []
    for i, combo in enumerate(itertools.product(*(grid[k] for k in keys))):
        overrides = [f"{k}={json.dumps(v) if not isinstance(v, str) else v}"
                     for k, v in zip(keys, combo)]
        raw = apply_overrides(config.to_dict(), overrides)
        sub = load_config(raw)
        tag = "-".join(f"{k.split('.')[-1]}={_sanitize(v)}"
                       for k, v in zip(keys, combo))
        result = run_experiment(sub, out_root / f"{i:03d}-{tag}")
        results.append(result)
        row = {k: combo[j] for j, k in enumerate(keys)}
        row.update(_report_row(result.report))
        rows.append(row)
    _write_sweep_summary(out_root / "sweep_summary.csv", keys, rows)
    return results


def _report_row(report: CalibrationReport) -> dict:
    return {"nll": report.nll, "ece": report.ece, "mce": report.mce,
            "mse": report.mse, "mae": report.mae, "r2": report.r2,
            "n_test": report.n_test}


_METRIC_COLS = ("nll", "ece", "mce", "mse", "mae", "r2", "n_test")


def _write_sweep_summary(path: Path, keys: list[str], rows: list[dict]):
    def write(p):
        with open(p, "w", encoding="utf-8") as fh:
            fh.write(",".join(list(keys) + list(_METRIC_COLS)) + "\n")
            for row in rows:
                cells = [str(row[k]) for k in keys]
                cells += [repr(float(row[c])) if c != "n_test"
                          else str(row[c]) for c in _METRIC_COLS]
                fh.write(",".join(cells) + "\n")

    _atomic_write(path, write)


def collect_reports(run_dirs) -> list[dict]:
    """Load (config, report) summaries from run directories."""
    rows = []
    for d in run_dirs:
        d = Path(d)
        report_path = d / REPORT_NAME
        if not report_path.exists():
            raise ConfigError(f"{d} has no {REPORT_NAME}; not a run directory?")
        report = CalibrationReport.load(report_path)
        row = {"dir": str(d),
               "name": report.meta.get("name", d.name),
               "method": report.meta.get("method", "?"),
               "dataset": report.meta.get("dataset", "?")}
        row.update(_report_row(report))
        rows.append(row)
    return rows


def emit_report(run_dirs, out_path=None) -> list[dict]:
    """Combined summary over runs; optionally written as CSV."""
    rows = collect_reports(run_dirs)
    if out_path is not None:
        def write(p):
            with open(p, "w", encoding="utf-8") as fh:
                cols = ["name", "method", "dataset", *_METRIC_COLS, "dir"]
                fh.write(",".join(cols) + "\n")
                for row in rows:
                    cells = []
                    for c in cols:
                        v = row[c]
                        cells.append(repr(float(v))
                                     if c in _METRIC_COLS and c != "n_test"
                                     else str(v))
                    fh.write(",".join(cells) + "\n")

        _atomic_write(Path(out_path), write)
    return rows


def selftest() -> tuple[bool, list[str]]:
    """Fast end-to-end sanity checks; returns (all_ok, report lines)."""
    from . import targets
    from .sampler import SdeConfig, simulate
    from .nets import NetLayout
    from .sampler import DriftNetwork

    lines = []
    ok = True

    def check(name, fn):
        nonlocal ok
        try:
            fn()
            lines.append(f"ok   {name}")
        except Exception as err:  # report, keep going
            ok = False
            lines.append(f"FAIL {name}: {err}")

    def zero_drift_moments():
        layout = NetLayout(3, 2, ())
        drift = DriftNetwork(layout, np.zeros(8))
        batch = simulate(drift, SdeConfig(gamma=0.5, dt_sample=0.05, seed=0),
                         4000)
        if abs(batch.terminal.var() - 0.5) > 0.05:
            raise AssertionError(
                f"uncontrolled terminal variance {batch.terminal.var():.3f} "
                "differs from gamma=0.5")

    def conjugate_identity():
        gen = np.random.default_rng(0)
        X = gen.normal(size=(20, 2))
        y = X @ np.array([1.0, -1.0]) + 0.1 * gen.normal(size=20)
        mean, cov = targets.conjugate_linear_posterior(X, y, 0.01, 1.0)
        t = targets.linear_regression_posterior(X, y, 0.01, 1.0)
        if np.linalg.norm(t.grad_logp(mean)) > 1e-6:
            raise AssertionError("posterior gradient at the exact mean is "
                                 "not zero")

    def quantile_inverse():
        means = np.array([[0.0], [1.0]])
        variances = np.array([[1.0], [0.25]])
        q = metrics.mixture_quantile(means, variances, 0.8)
        c = metrics.mixture_cdf(means, variances, q)
        if abs(c[0] - 0.8) > 1e-6:
            raise AssertionError(f"cdf(quantile(0.8)) = {c[0]}")

    def tiny_run():
        import tempfile
        cfg = load_config({
            "name": "selftest", "method": "map", "seed": 0,
            "dataset": {"generator": "hetero_sine", "n_train": 16,
                        "n_test": 16},
            "method_params": {"iterations": 50},
            "n_samples": 1,
        })
        with tempfile.TemporaryDirectory() as tmp:
            result = run_experiment(cfg, Path(tmp) / "run")
            if not math.isfinite(result.report.nll):
                raise AssertionError("non-finite NLL from a tiny MAP run")

    check("uncontrolled diffusion matches reference law", zero_drift_moments)
    check("conjugate linear posterior identities", conjugate_identity)
    check("mixture quantile inverts the CDF", quantile_inverse)
    check("tiny end-to-end run produces a report", tiny_run)
    return ok, lines
