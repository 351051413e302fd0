"""YAML experiment configs: strict keys, defaults, and flag overrides.

A config is a mapping with a few top-level keys and one section per
concern::

    algorithm: pflego
    seed: 3
    rounds: 200
    training: {tau: 50, beta: 0.007, server_optimizer: adam, server_rate: 0.001}
    participation: {mode: fixed, rate: 0.2}
    federation: {clients: 20, personalization: high}
    synthetic: {classes: 10, input_dim: 10, spread: 0.5}

Unknown keys and wrongly typed values are rejected with their dotted path.
"""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Any, Mapping

import yaml

from .data import SyntheticSpec
from .errors import PflegoError, UsageError
from .fl import AlgorithmConfig
from .orchestrator import ExperimentConfig, IdxSource

REQUIRED = object()
OPTIONAL = object()

# (types, default); a nested dict is a section
SCHEMA: dict[str, Any] = {
    "algorithm": ((str,), REQUIRED),
    "seed": ((int,), REQUIRED),
    "rounds": ((int,), 200),
    "eval_every": ((int,), 1),
    "threads": ((int,), 1),
    "window": ((int,), 10),
    "training": {
        "tau": ((int,), 50),
        "beta": ((float,), 0.007),
        "server_optimizer": ((str,), "adam"),
        "server_rate": ((float,), 0.001),
        "schedule": ((str,), "constant"),
        "alpha_in_head_update": ((bool,), True),
        "adam_beta1": ((float,), 0.9),
        "adam_beta2": ((float,), 0.999),
        "adam_eps": ((float,), 1e-8),
    },
    "participation": {
        "mode": ((str,), "fixed"),
        "rate": ((float,), 0.2),
    },
    "federation": {
        "clients": ((int,), 20),
        "personalization": ((str,), "high"),
        "train_fraction": ((float,), 0.75),
    },
    "model": {
        "hidden": ((list,), [200]),
    },
    "synthetic": {
        "classes": ((int,), 10),
        "input_dim": ((int,), 10),
        "samples_per_class": ((int,), 134),
        "spread": ((float,), 0.5),
        "seed": ((int, type(None)), None),
    },
    "idx": {
        "images": ((str,), REQUIRED),
        "labels": ((str,), REQUIRED),
        "max_per_class": ((int, type(None)), None),
    },
    "output": {
        "wall_time": ((bool,), False),
        "figures": ((bool,), True),
    },
}

DATA_SECTIONS = ("synthetic", "idx")


def _check_type(path: str, value, types) -> Any:
    if isinstance(value, bool) and bool not in types:
        raise UsageError(f"{path}: expected {types[0].__name__}, got a boolean")
    if float in types and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, types):
        names = " or ".join("null" if t is type(None) else t.__name__ for t in types)
        raise UsageError(f"{path}: expected {names}, got {type(value).__name__} {value!r}")
    return value


def _resolve(raw: Mapping, schema: Mapping, prefix: str = "") -> dict:
    if not isinstance(raw, Mapping):
        raise UsageError(f"{prefix.rstrip('.') or 'config'}: expected a mapping")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise UsageError(f"unknown config key {prefix}{unknown[0]!s}")
    out = {}
    for key, rule in schema.items():
        path = prefix + key
        if isinstance(rule, dict):
            if key in DATA_SECTIONS and key not in raw:
                continue
            out[key] = _resolve(raw.get(key) or {}, rule, path + ".")
            continue
        types, default = rule
        if key not in raw:
            if default is REQUIRED:
                raise UsageError(f"missing required config key {path}")
            out[key] = copy.deepcopy(default)
        else:
            out[key] = _check_type(path, raw[key], types)
    return out


def resolve_config(raw: Mapping, overrides: Mapping[str, Any] | None = None) -> dict:
    """Fill defaults, apply ``overrides`` (dotted keys), and validate."""
    raw = copy.deepcopy(dict(raw or {}))
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = raw
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    present = [s for s in DATA_SECTIONS if s in raw]
    if len(present) != 1:
        raise UsageError("config needs exactly one data section: 'synthetic' or 'idx'")
    resolved = _resolve(raw, SCHEMA)
    hidden = resolved["model"]["hidden"]
    if not hidden or not all(isinstance(h, int) and not isinstance(h, bool) and h > 0 for h in hidden):
        raise UsageError("model.hidden: expected a non-empty list of positive integers")
    return resolved


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise UsageError(f"{path}: not valid YAML ({exc})") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, Mapping):
        raise UsageError(f"{path}: top level must be a mapping")
    return raw


def parse_config(path, overrides: Mapping[str, Any] | None = None) -> tuple[ExperimentConfig, dict]:
    """Read ``path``, apply overrides, and return ``(ExperimentConfig, resolved dict)``."""
    resolved = resolve_config(load_config_file(path), overrides)
    return to_experiment(resolved), resolved


def to_experiment(resolved: Mapping) -> ExperimentConfig:
    tr, part, fed = resolved["training"], resolved["participation"], resolved["federation"]
    try:
        algorithm = AlgorithmConfig(
            algorithm=resolved["algorithm"],
            tau=tr["tau"],
            beta=tr["beta"],
            server_mode=tr["server_optimizer"],
            server_rate=tr["server_rate"],
            schedule=tr["schedule"],
            alpha_in_head_update=tr["alpha_in_head_update"],
            adam_beta1=tr["adam_beta1"],
            adam_beta2=tr["adam_beta2"],
            adam_eps=tr["adam_eps"],
        )
        synthetic = SyntheticSpec(**resolved["synthetic"]) if "synthetic" in resolved else None
        idx = IdxSource(**resolved["idx"]) if "idx" in resolved else None
        return ExperimentConfig(
            algorithm=algorithm,
            seed=resolved["seed"],
            rounds=resolved["rounds"],
            eval_every=resolved["eval_every"],
            threads=resolved["threads"],
            clients=fed["clients"],
            participation_mode=part["mode"],
            participation_rate=part["rate"],
            personalization=fed["personalization"],
            train_fraction=fed["train_fraction"],
            hidden=tuple(resolved["model"]["hidden"]),
            synthetic=synthetic,
            idx=idx,
            window=resolved["window"],
        )
    except PflegoError as exc:
        raise UsageError(str(exc)) from exc
    except ValueError as exc:
        # enum lookups: e.g. algorithm 'fedsgd' is not a valid Algorithm
        raise UsageError(str(exc)) from exc
