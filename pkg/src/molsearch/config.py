"""TOML run configuration: defaults, validation, overrides and echo."""

from __future__ import annotations

import copy
import sys
from importlib import resources
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .engine import RunConfig
from .ga import GaConfig
from .mcts import MctsConfig
from .reward import RewardConfig

# path entries left empty fall back to the bundled fixture files
DATA_FILES = {
    "corpus": "corpus.smi",
    "targets": "targets.json",
    "panel_training": "panel_training.json",
    "panel_verification": "panel_verification.json",
}

DEFAULTS: dict[str, dict] = {
    "paths": {
        "corpus": "",
        "prior": "",
        "targets": "",
        "panel_training": "",
        "panel_verification": "",
        "reward_config": "",
        "out_dir": "run",
    },
    "target": {"id": "target000"},
    "policy": {"order": 6, "k": 0.05, "vocabulary": "full"},
    "reward": {
        "alpha": -1.0,
        "beta": 1.0,
        "theta_t": 1.0,
        "theta_z": 0.0,
        "calibrate": True,
        "calibration_seed": 0,
        "calibration_samples": 2000,
    },
    "oracle": {"bias": 0.0},
    "run": {
        "budget": 10_000,
        "mcts_steps_per_iteration": 48,
        "ga_children_per_iteration": 12,
        "self_train_batch": 64,
        "self_train_weight": 1.0,
        "queue_capacity": 1000,
        "ablation": [],
        "seed": 0,
        "top_k": 10,
        "threads": 1,
    },
    "mcts": {"c": 1.5, "n_rollouts": 8, "mix": 0.8, "n_expand": 5, "re_expand_prob": 0.1},
    "ga": {"population": 32, "crossover_rate": 0.8, "mutation_rate": 0.3, "max_attempts": 20},
}


class ConfigError(ValueError):
    pass


def data_path(name: str) -> Path:
    return Path(str(resources.files("molsearch") / "data" / name))


def _coerce(section: str, key: str, value, default):
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{where}: expected a list of strings, got {value!r}")
        return list(value)
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def merge(base: dict, overrides: dict) -> dict:
    """Overlay ``overrides`` on ``base``, rejecting unknown sections and keys."""
    out = copy.deepcopy(base)
    for section, values in overrides.items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in values.items():
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            out[section][key] = _coerce(section, key, value, DEFAULTS[section][key])
    return out


def parse_override(item: str) -> dict:
    """``section.key=value`` to a nested dict; the value is read as TOML, else as a bare string."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    dotted, raw = item.split("=", 1)
    parts = dotted.strip().split(".")
    if len(parts) != 2 or not all(parts):
        raise ConfigError(f"override key {dotted!r} must look like section.key")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return {parts[0]: {parts[1]: value}}


def load(path=None, overrides=()) -> dict:
    """Resolved configuration from an optional TOML file plus ``--set`` overrides.

    Relative paths are resolved against the config file's directory; empty
    data paths point at the bundled fixtures.
    """
    cfg = copy.deepcopy(DEFAULTS)
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
        cfg = merge(cfg, doc)
        base = path.resolve().parent
    for item in overrides:
        cfg = merge(cfg, parse_override(item))
    paths = cfg["paths"]
    for key, value in paths.items():
        if not value and key in DATA_FILES:
            paths[key] = str(data_path(DATA_FILES[key]))
        elif value and not Path(value).is_absolute():
            paths[key] = str((base / value).resolve())
    run_config(cfg)  # validate early
    reward_config(cfg)
    return cfg


def dumps(cfg: dict) -> str:
    return tomli_w.dumps(cfg)


def run_config(cfg: dict) -> RunConfig:
    r = cfg["run"]
    try:
        return RunConfig(
            budget=r["budget"],
            mcts_steps_per_iteration=r["mcts_steps_per_iteration"],
            ga_children_per_iteration=r["ga_children_per_iteration"],
            self_train_batch=r["self_train_batch"],
            self_train_weight=r["self_train_weight"],
            queue_capacity=r["queue_capacity"],
            ablation=frozenset(r["ablation"]),
            seed=r["seed"],
            top_k=r["top_k"],
            mcts=MctsConfig(**cfg["mcts"]),
            ga=GaConfig(**cfg["ga"]),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e


def reward_config(cfg: dict) -> RewardConfig:
    r = cfg["reward"]
    try:
        return RewardConfig(r["alpha"], r["beta"], r["theta_t"], r["theta_z"])
    except ValueError as e:
        raise ConfigError(str(e)) from e


def read_reward_file(path) -> tuple[RewardConfig, dict]:
    """Reward parameters written by ``molsearch calibrate`` plus its diagnostics table."""
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    r = doc.get("reward", {})
    try:
        cfg = RewardConfig(float(r["alpha"]), float(r["beta"]), float(r["theta_t"]), float(r["theta_z"]))
    except KeyError as e:
        raise ConfigError(f"{path}: missing reward.{e.args[0]}") from e
    return cfg, doc.get("calibration", {})


def reward_file_text(cfg: RewardConfig, diagnostics: dict) -> str:
    doc = {
        "reward": {"alpha": cfg.alpha, "beta": cfg.beta, "theta_t": cfg.theta_t, "theta_z": cfg.theta_z},
        "calibration": diagnostics,
    }
    return tomli_w.dumps(doc)
