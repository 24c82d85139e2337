# -*- coding: utf-8 -*-
"""
Configuration management for the adaptive scenario-MPC pipeline

One JSON file with a flat section per pipeline stage. User files are merged
over DEFAULT_CONFIG; unknown keys and wrongly typed values are rejected.
"""

import copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from .errors import ConfigError
from .plant.dynamics import STATE_BOX
from .version import get_version

logger = logging.getLogger(__name__)

CONFIG_FILE_NAME = "resolved_config.json"
SEED_ENV_VAR = "ASMPC_SEED"

DEFAULT_CONFIG: Dict[str, Any] = {
    "_config_version": get_version(),
    "plant": {
        "n_samples": 1000,
        "heldout_samples": 300,
        "dt": 0.1,
        "substeps": 10,
        "input_low": -0.5,
        "input_high": 0.5,
        "x0": [0.5, 1.0],
        "collection_low": [-0.8, 0.0],
        "collection_high": [0.8, 10.0],
        "train_fraction": 0.75,
    },
    "nominal": {
        "ridge": 1e-8,
    },
    "bnn": {
        "ann_epochs": 3000,
        "ann_lr": 1e-3,
        "epochs": 3000,
        "batch_size": 32,
        "lr": 1e-3,
        "n_samples": 1,
        "sigma_obs": 0.05,
        "rho_init": -5.0,
        "prior_pi": 0.5,
        "prior_sigma1": 1.5,
        "prior_sigma2": 0.1,
        "eval_every": 10,
        "n_mc": 50,
        "interval_c": 2.0,
    },
    "meta": {
        "window": 5,
        "horizon": 5,
        "epochs": 20,
        "n_tasks_per_iter": 10,
        "lr_psi": 1e-5,
        "lr_w": 1e-5,
        "kl_weight": 1e-4,
        "kl_mode": "mc",
        "n_samples": 1,
        "readapt_each_step": False,
        "rollout_mode": False,
        "sample_predictions": False,
    },
    "scenario": {
        "multipliers": [3.0],
        "bounds": [0.21, 0.85],
    },
    "mpc": {
        "horizon": 7,
        "q_scale": 1.0,
        "r_scale": 100.0,
        "p_scale": 1.0,
        "penalty_weights": [1e2, 1e4, 1e6],
        "max_iterations": 200,
    },
    "closed_loop": {
        "steps": 150,
        "x0": [-1.0, 5.0],
        "n_mc": 50,
    },
    "acceptance": {
        "bfr_min": 85.0,
        "adaptation_slack": 1.05,
        "containment_min": 0.9,
        "tail_start": 120,
        "tail_norm_max": 0.2,
        "settle_threshold": 0.1,
    },
    "seeds": {
        "collect": 0,
        "heldout": 1,
        "split": 2,
        "ann": 3,
        "bnn": 4,
        "meta": 5,
        "closed_loop": 6,
    },
}

# Full-scale training lengths
FULL_SCALE = {
    "bnn": {"ann_epochs": 30000, "epochs": 30000},
    "meta": {"epochs": 100},
}

POSITIVE_KEYS = {
    "plant": ("n_samples", "heldout_samples", "dt", "substeps"),
    "nominal": (),
    "bnn": ("ann_epochs", "ann_lr", "epochs", "batch_size", "lr", "n_samples", "sigma_obs",
            "prior_sigma1", "prior_sigma2", "eval_every"),
    "meta": ("window", "horizon", "n_samples", "lr_psi", "lr_w"),
    "mpc": ("horizon",),
    "closed_loop": (),
}


class RunConfig:
    """Resolved configuration with one accessor per section"""

    def __init__(self, data: Dict[str, Any]):
        self._data = data

    def __getitem__(self, section: str) -> Dict[str, Any]:
        return self._data[section]

    @property
    def plant(self) -> Dict[str, Any]:
        return self._data["plant"]

    @property
    def nominal(self) -> Dict[str, Any]:
        return self._data["nominal"]

    @property
    def bnn(self) -> Dict[str, Any]:
        return self._data["bnn"]

    @property
    def meta(self) -> Dict[str, Any]:
        return self._data["meta"]

    @property
    def scenario(self) -> Dict[str, Any]:
        return self._data["scenario"]

    @property
    def mpc(self) -> Dict[str, Any]:
        return self._data["mpc"]

    @property
    def closed_loop(self) -> Dict[str, Any]:
        return self._data["closed_loop"]

    @property
    def acceptance(self) -> Dict[str, Any]:
        return self._data["acceptance"]

    @property
    def seeds(self) -> Dict[str, int]:
        return self._data["seeds"]

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self._data)


def _check_keys(user: Dict[str, Any], defaults: Dict[str, Any], prefix: str = "") -> None:
    for key, value in user.items():
        dotted = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"Unknown configuration key '{dotted}'")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"Configuration key '{dotted}' must be a section")
            _check_keys(value, defaults[key], prefix=f"{dotted}.")


def _deep_merge_config(default_config: Dict[str, Any], user_config: Dict[str, Any]) -> Dict[str, Any]:
    """
    Deep merge user configuration over defaults, ensuring all nested keys exist

    Args:
        default_config: Default configuration dictionary
        user_config: User's configuration dictionary

    Returns:
        Merged configuration; user values win
    """
    result = copy.deepcopy(user_config)
    for key, default_value in default_config.items():
        if key not in result:
            result[key] = copy.deepcopy(default_value)
        elif isinstance(default_value, dict) and isinstance(result[key], dict):
            result[key] = _deep_merge_config(default_value, result[key])
    return result


def _type_matches(value: Any, default: Any) -> bool:
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, list):
        return isinstance(value, list) and all(_type_matches(v, default[0]) for v in value)
    return isinstance(value, type(default))


def validate_config(data: Dict[str, Any]) -> None:
    """Type and range checks on a merged configuration"""
    for section, defaults in DEFAULT_CONFIG.items():
        if section.startswith("_"):
            continue
        for key, default in defaults.items():
            value = data[section][key]
            if not _type_matches(value, default):
                raise ConfigError(f"Configuration key '{section}.{key}' has the wrong type: {value!r}")

    for section, keys in POSITIVE_KEYS.items():
        for key in keys:
            if data[section][key] <= 0:
                raise ConfigError(f"Configuration key '{section}.{key}' must be positive")

    plant = data["plant"]
    if not 0.0 < plant["train_fraction"] < 1.0:
        raise ConfigError("Configuration key 'plant.train_fraction' must lie in (0, 1)")
    if plant["input_low"] >= plant["input_high"]:
        raise ConfigError("Configuration keys 'plant.input_low' < 'plant.input_high' required")
    for section, key in (("plant", "x0"), ("plant", "collection_low"), ("plant", "collection_high"),
                         ("closed_loop", "x0"), ("scenario", "bounds")):
        if len(data[section][key]) != 2:
            raise ConfigError(f"Configuration key '{section}.{key}' must have two entries")
    if any(lo >= hi for lo, hi in zip(plant["collection_low"], plant["collection_high"])):
        raise ConfigError("Configuration keys 'plant.collection_low' < 'plant.collection_high' required")
    if not (STATE_BOX.contains(plant["collection_low"]) and STATE_BOX.contains(plant["collection_high"])):
        raise ConfigError(f"The collection box must lie inside the state box {STATE_BOX}")
    if not 0.0 <= data["bnn"]["prior_pi"] <= 1.0:
        raise ConfigError("Configuration key 'bnn.prior_pi' must lie in [0, 1]")
    if data["bnn"]["n_mc"] < 2 or data["closed_loop"]["n_mc"] < 2:
        raise ConfigError("Monte-Carlo draw counts must be at least 2")
    if data["meta"]["kl_mode"] not in ("mc", "analytic"):
        raise ConfigError("Configuration key 'meta.kl_mode' must be 'mc' or 'analytic'")
    if data["meta"]["n_tasks_per_iter"] < 0 or data["meta"]["epochs"] < 0:
        raise ConfigError("Meta task and epoch counts must be non-negative")
    if not data["scenario"]["multipliers"] or min(data["scenario"]["multipliers"]) <= 0:
        raise ConfigError("Configuration key 'scenario.multipliers' needs positive entries")
    if min(data["scenario"]["bounds"]) <= 0:
        raise ConfigError("Configuration key 'scenario.bounds' needs positive entries")
    if not data["mpc"]["penalty_weights"]:
        raise ConfigError("Configuration key 'mpc.penalty_weights' must not be empty")
    if min(data["mpc"]["q_scale"], data["mpc"]["r_scale"], data["mpc"]["p_scale"]) < 0:
        raise ConfigError("Cost weight scales must be non-negative")
    if data["closed_loop"]["steps"] < 0:
        raise ConfigError("Configuration key 'closed_loop.steps' must be non-negative")


def load_config(path: Optional[Path] = None) -> RunConfig:
    """
    Load, merge and validate a run configuration

    Args:
        path: JSON file; defaults only when None

    Returns:
        RunConfig
    """
    user: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Configuration file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                user = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Configuration file {path} is not valid JSON: {e}") from e
        if not isinstance(user, dict):
            raise ConfigError(f"Configuration file {path} must hold a JSON object")
        logger.info(f"Loading configuration from: {path}")
        config_version = user.get("_config_version")
        if config_version is not None and config_version != get_version():
            logger.info(f"Configuration file is from version {config_version}, current version is {get_version()}")
        user["_config_version"] = get_version()
    else:
        logger.info("No configuration file given, using defaults")

    _check_keys(user, DEFAULT_CONFIG)
    merged = _deep_merge_config(DEFAULT_CONFIG, user)
    validate_config(merged)
    return RunConfig(merged)


def apply_full_scale(cfg: RunConfig) -> RunConfig:
    """Restore the full-scale training lengths"""
    data = cfg.to_dict()
    for section, values in FULL_SCALE.items():
        data[section].update(values)
    logger.info("Full-scale training lengths enabled")
    return RunConfig(data)


def apply_env_overrides(cfg: RunConfig, environ: Optional[Dict[str, str]] = None) -> RunConfig:
    """ASMPC_SEED=<base> sets every seed to base + its fixed stage offset"""
    environ = os.environ if environ is None else environ
    raw = environ.get(SEED_ENV_VAR)
    if raw is None:
        return cfg
    try:
        base = int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got '{raw}'") from None
    data = cfg.to_dict()
    for offset, stage in enumerate(DEFAULT_CONFIG["seeds"]):
        data["seeds"][stage] = base + offset
    logger.info(f"Seeds overridden from {SEED_ENV_VAR}={base}")
    return RunConfig(data)


def save_config(cfg: RunConfig, out_dir: Path) -> Path:
    """Write the resolved configuration into an output directory"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_file = out_dir / CONFIG_FILE_NAME
    with open(config_file, "w", encoding="utf-8") as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.debug(f"Configuration saved to: {config_file}")
    return config_file
