"""Run configuration: one YAML file drives a whole experiment.

Unknown keys are rejected and every violation is reported at once.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, fields

import yaml

from .data import DEFAULT_WINDOW, NormStats, appliance_stats
from .network import NetworkConfig
from .synth import KINDS, ApplianceProfile
from .training import TrainConfig

class _Required:
    """Marker for keys without a default; survives deep copies."""

    def __repr__(self):
        return "REQUIRED"

    def __deepcopy__(self, memo):
        return self


REQUIRED = _Required()

SECTIONS = {
    "data": {
        "dir": None,
        "mains_channels": None,
        "sum_mains": True,
        "appliance_channel": None,
        "period": 6,
        "gap_limit": 3,
        "train_fraction": 0.8,
        "drop_excess_peaks": False,
    },
    "appliance": {
        "name": None,
        "mean": None,
        "std": None,
        "window_length": DEFAULT_WINDOW,
        "aggregate_mean": None,
        "aggregate_std": None,
    },
    "model": {
        **{f.name: f.default for f in fields(NetworkConfig) if f.name != "window_length"},
        "seed": 0,
        "stack": None,
    },
    "train": {f.name: f.default for f in fields(TrainConfig)},
    "synth": {
        "seed": REQUIRED,
        "length": 20000,
        "noise_sigma": 10.0,
        "period": 6,
        "start": 1303132929,
        "profiles": REQUIRED,
    },
}

PROFILE_KEYS = {f.name for f in fields(ApplianceProfile)}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass
class RunConfig:
    data: dict
    appliance: dict
    model: dict
    train: dict
    synth: dict

    # -- typed views ---------------------------------------------------------
    def network_config(self):
        kw = {k: v for k, v in self.model.items() if k not in ("seed", "stack")}
        return NetworkConfig(window_length=self.appliance["window_length"], **kw)

    def train_config(self):
        return TrainConfig(**self.train)

    def target_stats(self):
        a = self.appliance
        if a["mean"] is not None:
            return NormStats(float(a["mean"]), float(a["std"]))
        if a["name"]:
            return appliance_stats(a["name"])
        return None

    def aggregate_stats(self):
        a = self.appliance
        if a["aggregate_mean"] is None:
            return None
        return NormStats(float(a["aggregate_mean"]), float(a["aggregate_std"]))

    def profiles(self):
        return [ApplianceProfile(**p) for p in self.synth["profiles"]]

    def stack(self):
        return [(int(s["kernel"]), int(s.get("dilation", 1)), bool(s.get("causal", False)))
                for s in self.model["stack"]]

    def require_synth(self):
        missing = [f"synth.{k}" for k, v in self.synth.items() if v is REQUIRED]
        if missing:
            raise ConfigError([f"missing required key {k}" for k in missing])

    def with_seed(self, seed):
        cfg = copy.deepcopy(self)
        cfg.synth["seed"] = seed
        cfg.model["seed"] = seed
        cfg.train["shuffle_seed"] = seed
        return cfg

    def to_dict(self):
        return {
            name: {k: (None if v is REQUIRED else v) for k, v in getattr(self, name).items()}
            for name in SECTIONS
        }


def _check_number(problems, key, value, minimum=None, integer=False, odd=False, strict=False):
    if value is None:
        return
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append(f"{key} must be a number, got {value!r}")
        return
    if integer and int(value) != value:
        problems.append(f"{key} must be an integer, got {value!r}")
        return
    if minimum is not None and (value <= minimum if strict else value < minimum):
        problems.append(f"{key} must be {'>' if strict else '>='} {minimum}, got {value!r}")
    if odd and int(value) % 2 == 0:
        problems.append(f"{key} must be odd, got {value!r}")


def from_dict(raw):
    """Merge ``raw`` over the defaults and validate it."""
    raw = raw or {}
    problems = []
    if not isinstance(raw, dict):
        raise ConfigError([f"top level must be a mapping, got {type(raw).__name__}"])
    merged = {}
    for name in raw:
        if name not in SECTIONS:
            problems.append(f"unknown section {name!r}")
    for name, defaults in SECTIONS.items():
        section = raw.get(name) or {}
        if not isinstance(section, dict):
            problems.append(f"section {name!r} must be a mapping")
            section = {}
        for key in section:
            if key not in defaults:
                problems.append(f"unknown key {name}.{key}")
        merged[name] = {k: section.get(k, copy.deepcopy(v)) for k, v in defaults.items()}

    d, a, m, t, s = (merged[k] for k in ("data", "appliance", "model", "train", "synth"))
    _check_number(problems, "data.period", d["period"], 1, integer=True)
    _check_number(problems, "data.gap_limit", d["gap_limit"], 0, integer=True)
    _check_number(problems, "data.train_fraction", d["train_fraction"], 0, strict=True)
    if isinstance(d["train_fraction"], (int, float)) and d["train_fraction"] >= 1:
        problems.append("data.train_fraction must be < 1")
    _check_number(problems, "appliance.window_length", a["window_length"], 1, integer=True, odd=True)
    if (a["mean"] is None) != (a["std"] is None):
        problems.append("appliance.mean and appliance.std must be given together")
    _check_number(problems, "appliance.std", a["std"], 0, strict=True)
    if (a["aggregate_mean"] is None) != (a["aggregate_std"] is None):
        problems.append("appliance.aggregate_mean and appliance.aggregate_std must be given together")
    _check_number(problems, "appliance.aggregate_std", a["aggregate_std"], 0, strict=True)

    for key in ("first_filters", "filters", "n_blocks"):
        _check_number(problems, f"model.{key}", m[key], 1, integer=True)
    for key in ("first_kernel", "kernel_size"):
        _check_number(problems, f"model.{key}", m[key], 1, integer=True, odd=True)
    _check_number(problems, "model.dropout_rate", m["dropout_rate"], 0)
    if isinstance(m["dropout_rate"], (int, float)) and m["dropout_rate"] >= 1:
        problems.append("model.dropout_rate must be < 1")
    if m["stack"] is not None:
        if not isinstance(m["stack"], list) or not m["stack"]:
            problems.append("model.stack must be a nonempty list of layers")
        else:
            for i, layer in enumerate(m["stack"]):
                if not isinstance(layer, dict) or "kernel" not in layer:
                    problems.append(f"model.stack[{i}] needs a kernel")
                    continue
                extra = set(layer) - {"kernel", "dilation", "causal"}
                if extra:
                    problems.append(f"unknown key(s) {sorted(extra)} in model.stack[{i}]")
                _check_number(problems, f"model.stack[{i}].kernel", layer["kernel"], 2, integer=True)
                _check_number(problems, f"model.stack[{i}].dilation", layer.get("dilation", 1), 1, integer=True)

    _check_number(problems, "train.learning_rate", t["learning_rate"], 0)
    _check_number(problems, "train.batch_size", t["batch_size"], 1, integer=True)
    _check_number(problems, "train.max_epochs", t["max_epochs"], 1, integer=True)
    _check_number(problems, "train.early_stop_patience", t["early_stop_patience"], 1, integer=True)
    _check_number(problems, "train.max_steps", t["max_steps"], 1, integer=True)

    _check_number(problems, "synth.length", s["length"], 1, integer=True)
    _check_number(problems, "synth.noise_sigma", s["noise_sigma"], 0)
    _check_number(problems, "synth.period", s["period"], 1, integer=True)
    if s["profiles"] is not REQUIRED:
        if not isinstance(s["profiles"], list) or not s["profiles"]:
            problems.append("synth.profiles must be a nonempty list")
        else:
            for i, p in enumerate(s["profiles"]):
                if not isinstance(p, dict) or "name" not in p:
                    problems.append(f"synth.profiles[{i}] needs a name")
                    continue
                extra = set(p) - PROFILE_KEYS
                if extra:
                    problems.append(f"unknown key(s) {sorted(extra)} in synth.profiles[{i}]")
                if p.get("kind", "pulse") not in KINDS:
                    problems.append(f"synth.profiles[{i}].kind must be one of {KINDS}")
    if problems:
        raise ConfigError(problems)
    return RunConfig(**merged)


def load_config(path):
    if path is None:
        return from_dict({})
    with open(path, encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError([f"{path}: {exc}"]) from None
    return from_dict(raw)


def dump_config(config):
    return yaml.safe_dump(config.to_dict(), sort_keys=False)
