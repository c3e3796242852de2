"""Experiment configuration: strict JSON schema with resolved defaults.

A config names a method, a dataset, a model preset, and method knobs.
Unknown keys anywhere are rejected with their full dotted path, so typos
fail loudly instead of silently running defaults. ``resolve`` returns the
fully defaulted dict that downstream code and artifacts use; serializing
that snapshot makes runs self-describing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import GENERATORS
from .errors import ConfigError
from .sampler import SdeConfig

__all__ = ["METHODS", "ExperimentConfig", "load_config", "apply_overrides"]

METHODS = ("diffuq", "map", "ensemble", "sgld", "svgd", "mfvi", "mc_dropout")

_METHOD_DEFAULTS = {
    "diffuq": {"iterations": 1500, "learning_rate": 1e-3,
               "data_minibatch": None},
    "map": {"iterations": 2000, "learning_rate": 0.01},
    "ensemble": {"iterations": 2000, "learning_rate": 0.01},
    "sgld": {"step_size": 1e-4, "n_steps": None, "burn_in": 0.5, "thin": 10,
             "data_minibatch": None},
    "svgd": {"n_steps": 1000, "step_size": 0.05, "init_scale": 1.0},
    "mfvi": {"iterations": 3000, "learning_rate": 0.01},
    "mc_dropout": {"rate": 0.1, "iterations": 2000, "learning_rate": 0.01},
}

_DATASET_DEFAULTS = {
    "generator": None, "n_train": 128, "n_test": 256, "params": {},
    "csv_path": None, "target_col": "y", "feature_cols": None,
    "train_fraction": 0.8,
}

_MODEL_DEFAULTS = {"preset": "pensim"}

_SDE_DEFAULTS = {"gamma": 1.0, "dt_train": 0.04, "dt_sample": 0.01,
                 "horizon": 1.0, "batch_size": 256}

_TOP_DEFAULTS = {
    "name": "run", "seed": 0, "method": None, "dataset": None,
    "model": dict(_MODEL_DEFAULTS), "sde": dict(_SDE_DEFAULTS),
    "method_params": {}, "n_samples": 128, "n_bins": 20,
    "checkpoint_format": "json",
}


def _merge_checked(raw: dict, defaults: dict, path: str) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"{path or 'config'} must be an object, "
                          f"got {type(raw).__name__}")
    unknown = sorted(set(raw) - set(defaults))
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(
            f"unknown config key(s): {', '.join(where + k for k in unknown)}; "
            f"allowed: {', '.join(sorted(defaults))}")
    out = {k: (dict(v) if isinstance(v, dict) else v)
           for k, v in defaults.items()}
    out.update(raw)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, fully defaulted experiment description."""

    name: str
    seed: int
    method: str
    dataset: dict
    model: dict
    sde: SdeConfig
    method_params: dict
    n_samples: int
    n_bins: int
    checkpoint_format: str
    raw: dict = field(compare=False, repr=False, default_factory=dict)

    def to_dict(self) -> dict:
        """Resolved snapshot (all defaults filled in)."""
        sde = self.sde.to_dict()
        sde.pop("seed", None)  # derived from the top-level seed
        return {"name": self.name, "seed": self.seed, "method": self.method,
                "dataset": dict(self.dataset), "model": dict(self.model),
                "sde": sde,
                "method_params": dict(self.method_params),
                "n_samples": self.n_samples, "n_bins": self.n_bins,
                "checkpoint_format": self.checkpoint_format}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")


def _validate_dataset(ds: dict) -> dict:
    ds = _merge_checked(ds, _DATASET_DEFAULTS, "dataset")
    has_gen = ds["generator"] is not None
    has_csv = ds["csv_path"] is not None
    if has_gen == has_csv:
        raise ConfigError(
            "dataset needs exactly one of 'generator' or 'csv_path'")
    if has_gen:
        if ds["generator"] not in GENERATORS:
            raise ConfigError(f"dataset.generator {ds['generator']!r} unknown; "
                              f"options: {sorted(GENERATORS)}")
        for key in ("n_train", "n_test"):
            if not isinstance(ds[key], int) or ds[key] < 1:
                raise ConfigError(f"dataset.{key} must be a positive int, "
                                  f"got {ds[key]!r}")
        if not isinstance(ds["params"], dict):
            raise ConfigError("dataset.params must be an object")
    else:
        if not 0.0 < ds["train_fraction"] < 1.0:
            raise ConfigError(
                f"dataset.train_fraction must be in (0, 1), "
                f"got {ds['train_fraction']}")
    return ds


def load_config(source) -> ExperimentConfig:
    """Build an ExperimentConfig from a JSON file path or a plain dict."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path} is not valid JSON: {err}") from err
    elif isinstance(source, dict):
        raw = source
    else:
        raise ConfigError(f"config must be a path or dict, got {type(source)}")

    top = _merge_checked(raw, _TOP_DEFAULTS, "")
    if top["method"] is None:
        raise ConfigError("config is missing required key 'method'")
    if top["method"] not in METHODS:
        raise ConfigError(f"unknown method {top['method']!r}; "
                          f"options: {', '.join(METHODS)}")
    if top["dataset"] is None:
        raise ConfigError("config is missing required key 'dataset'")
    dataset = _validate_dataset(top["dataset"])
    model = _merge_checked(top["model"], _MODEL_DEFAULTS, "model")
    sde_dict = _merge_checked(top["sde"], _SDE_DEFAULTS, "sde")
    sde = SdeConfig(seed=int(top["seed"]), **sde_dict)
    params = _merge_checked(top["method_params"],
                            _METHOD_DEFAULTS[top["method"]], "method_params")
    if not isinstance(top["n_samples"], int) or top["n_samples"] < 1:
        raise ConfigError(f"n_samples must be a positive int, "
                          f"got {top['n_samples']!r}")
    if not isinstance(top["n_bins"], int) or top["n_bins"] < 2:
        raise ConfigError(f"n_bins must be an int >= 2, got {top['n_bins']!r}")
    if top["checkpoint_format"] not in ("json", "binary"):
        raise ConfigError(
            f"checkpoint_format must be 'json' or 'binary', "
            f"got {top['checkpoint_format']!r}")
    return ExperimentConfig(
        name=str(top["name"]), seed=int(top["seed"]), method=top["method"],
        dataset=dataset, model=model, sde=sde, method_params=params,
        n_samples=top["n_samples"], n_bins=top["n_bins"],
        checkpoint_format=top["checkpoint_format"], raw=raw)


def _parse_override_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text  # bare strings stay strings


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.path=value`` assignments to a raw config dict.

    Values parse as JSON when possible ("0.5" -> 0.5, "null" -> None),
    otherwise stay strings. Returns a deep-ish copy; the input is untouched.
    """
    out = json.loads(json.dumps(raw))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of form key=value")
        key, _, value = item.partition("=")
        parts = key.strip().split(".")
        if not all(parts):
            raise ConfigError(f"override {item!r} has an empty key segment")
        node = out
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(
                    f"override {item!r} descends into non-object {part!r}")
        node[parts[-1]] = _parse_override_value(value.strip())
    return out
