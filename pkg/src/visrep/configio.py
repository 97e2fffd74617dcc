"""Experiment configuration: one YAML document, optional preset inclusion,
dotted-path overrides, strict key checking, and a content hash that names
run directories and is stamped into every artifact."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import yaml

PRESET_DIR = Path(__file__).parent / "presets"

# every key a config may contain; None marks a value leaf
SCHEMA = {
    "preset": None,
    "seed": None,
    "out_root": None,
    "data": {"regime": None, "replay_root": None, "games": None,
             "per_checkpoint": None},
    "model": {"backbone": None, "neck_hidden": None, "latent": None,
              "action_dim": None},
    "objective": {"name": None, "epochs": None, "base_lr": None,
                  "weight_decay": None, "betas": None, "batch_size": None,
                  "early_stop": None, "k": None, "k2": None, "seq_steps": None,
                  "mask_ratio": None, "enc_layers": None, "dec_layers": None,
                  "n_heads": None, "mlp_ratio": None, "cql_coef": None,
                  "gamma": None, "v_min": None, "v_max": None, "n_atoms": None,
                  "reward_scale": None, "nce_reduction": None},
    "schedule": {"warmup_ratio": None, "initial_lr_ratio": None},
    "augment": {"shift_pad": None, "intensity_scale": None,
                "shift_enabled": None, "intensity_enabled": None},
    "bc": {"checkpoint": None, "game": None, "data": None, "env": None,
           "expected_count": None, "epochs": None, "base_lr": None,
           "weight_decay": None, "batch_size": None},
    "rl": {"checkpoint": None, "env": None, "game": None, "steps": None,
           "min_buffer": None, "eps_decay_steps": None, "q_hidden": None,
           "eval_episodes": None, "n_step": None, "batch_size": None,
           "capacity": None, "log_every": None, "target_update_every": None,
           "lr": None},
    "evaluate": {"scores": None, "refs": None, "resamples": None,
                 "bootstrap_seed": None},
    "report": {"aggregates": None, "plot": None},
    "cam": {"checkpoint": None, "obs": None, "stage": None, "out_size": None},
}


class ConfigError(ValueError):
    """Configuration rejected before any work starts."""


def _validate(doc, schema=SCHEMA, prefix=""):
    if not isinstance(doc, dict):
        raise ConfigError(f"section '{prefix.rstrip('.')}' must be a mapping, "
                          f"got {type(doc).__name__}")
    for key, value in doc.items():
        if key not in schema:
            raise ConfigError(f"unknown config key: {prefix}{key}")
        if isinstance(schema[key], dict):
            _validate(value, schema[key], prefix=f"{prefix}{key}.")


def _merge(base, extra):
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _load_preset(name):
    path = PRESET_DIR / f"{name}.yaml"
    if not path.exists():
        known = sorted(p.stem for p in PRESET_DIR.glob("*.yaml"))
        raise ConfigError(f"unknown preset '{name}'; available: {known}")
    doc = yaml.safe_load(path.read_text()) or {}
    if "preset" in doc:
        raise ConfigError(f"preset '{name}' may not include another preset")
    return doc


def _apply_override(doc, spec):
    if "=" not in spec:
        raise ConfigError(f"override '{spec}' is not of the form key.path=value")
    dotted, raw = spec.split("=", 1)
    value = yaml.safe_load(raw)
    node = doc
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override '{dotted}' descends into a scalar")
    node[parts[-1]] = value


def load_config(path=None, overrides=()) -> dict:
    """Resolve a config: preset merge, overrides, env hook, validation.

    The VISREP_REPLAY_ROOT environment variable, when set, replaces
    data.replay_root so corpora can move without editing configs.
    """
    doc = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text())
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a single YAML mapping")
        doc = loaded
    preset = doc.pop("preset", None)
    if preset is not None:
        doc = _merge(_load_preset(preset), doc)
    for spec in overrides:
        _apply_override(doc, spec)
    env_root = os.environ.get("VISREP_REPLAY_ROOT")
    if env_root:
        doc.setdefault("data", {})["replay_root"] = env_root
    _validate(doc)
    doc.setdefault("seed", 0)
    doc.setdefault("out_root", "runs")
    if not isinstance(doc["seed"], int) or isinstance(doc["seed"], bool):
        raise ConfigError(f"seed must be an integer, got {doc['seed']!r}")
    return doc


def config_hash(config: dict) -> str:
    """sha256 over the canonical JSON form of the resolved config."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"),
                       default=str)
    return hashlib.sha256(canon.encode()).hexdigest()
