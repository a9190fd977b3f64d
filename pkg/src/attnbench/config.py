"""Experiment configuration: plain-text ``key = value`` files with dotted
section keys, flag overrides, validation, and a stable hash.

Precedence: command-line flags > config file > defaults.  Unknown keys are
rejected with the offending key named.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .attention import KINDS
from .errors import ConfigurationError
from .training import TrainConfig


@dataclass
class DatasetConfig:
    root: str = ""
    resize: int = 224
    mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    std: tuple[float, float, float] = (0.5, 0.5, 0.5)
    split_seed: int = 0
    cache: str = "auto"  # auto | on | off
    on_decode_error: str = "abort"  # abort | skip


@dataclass
class ModelConfig:
    attention: tuple[str, ...] = ("none",)  # variants to run, in order
    reduction: int = 16
    width_divisor: int = 1


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    output: str = "out"

    def validate(self) -> None:
        if not self.dataset.root:
            raise ConfigurationError("dataset.root is required")
        if self.dataset.resize < 32:
            raise ConfigurationError(f"dataset.resize must be >= 32, got {self.dataset.resize}")
        if self.dataset.cache not in ("auto", "on", "off"):
            raise ConfigurationError(f"dataset.cache must be auto|on|off, got {self.dataset.cache!r}")
        if self.dataset.on_decode_error not in ("abort", "skip"):
            raise ConfigurationError(
                f"dataset.on_decode_error must be abort|skip, got {self.dataset.on_decode_error!r}")
        if len(self.dataset.mean) != 3 or len(self.dataset.std) != 3:
            raise ConfigurationError("dataset.mean and dataset.std need 3 values")
        if any(s == 0 for s in self.dataset.std):
            raise ConfigurationError("dataset.std entries must be nonzero")
        for kind in self.model.attention:
            if kind not in KINDS:
                raise ConfigurationError(
                    f"model.attention: unknown kind {kind!r}; expected from {KINDS}")
        if len(set(self.model.attention)) != len(self.model.attention):
            raise ConfigurationError("model.attention lists a variant twice")
        if self.model.reduction < 1:
            raise ConfigurationError(f"model.reduction must be >= 1, got {self.model.reduction}")
        if self.model.width_divisor < 1:
            raise ConfigurationError(
                f"model.width_divisor must be >= 1, got {self.model.width_divisor}")
        self.train.validate()


# key -> (parse, serialize) on the config object
def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _strs(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_SCHEMA: dict[str, tuple] = {
    "dataset.root": (str, ("dataset", "root")),
    "dataset.resize": (int, ("dataset", "resize")),
    "dataset.mean": (_floats, ("dataset", "mean")),
    "dataset.std": (_floats, ("dataset", "std")),
    "dataset.split_seed": (int, ("dataset", "split_seed")),
    "dataset.cache": (str, ("dataset", "cache")),
    "dataset.on_decode_error": (str, ("dataset", "on_decode_error")),
    "model.attention": (_strs, ("model", "attention")),
    "model.reduction": (int, ("model", "reduction")),
    "model.width_divisor": (int, ("model", "width_divisor")),
    "train.epochs": (int, ("train", "epochs")),
    "train.batch_size": (int, ("train", "batch_size")),
    "train.lr0": (float, ("train", "lr0")),
    "train.momentum": (float, ("train", "momentum")),
    "train.weight_decay": (float, ("train", "weight_decay")),
    "train.decay_factor": (float, ("train", "decay_factor")),
    "train.decay_points": (_floats, ("train", "decay_points")),
    "train.resplit_per_run": (_bool, ("train", "resplit_per_run")),
    "seeds": (_ints, ("train", "seeds")),
    "output": (str, (None, "output")),
}


def _get(cfg: ExperimentConfig, path: tuple) -> object:
    section, attr = path
    holder = cfg if section is None else getattr(cfg, section)
    return getattr(holder, attr)


def _set(cfg: ExperimentConfig, path: tuple, value) -> None:
    section, attr = path
    holder = cfg if section is None else getattr(cfg, section)
    setattr(holder, attr, value)


def apply_assignments(cfg: ExperimentConfig, items: dict[str, str],
                      source: str) -> ExperimentConfig:
    for key, raw in items.items():
        if key not in _SCHEMA:
            raise ConfigurationError(f"unknown config key {key!r} ({source})")
        parse, path = _SCHEMA[key]
        try:
            _set(cfg, path, parse(raw))
        except (ValueError, TypeError) as exc:
            raise ConfigurationError(f"bad value for {key!r} ({source}): {exc}") from exc
    return cfg


def parse_config(text: str, source: str = "config") -> ExperimentConfig:
    items: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        items[key.strip()] = value.strip()
    return apply_assignments(ExperimentConfig(), items, source)


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = [f"{key} = {_fmt(_get(cfg, path))}"
             for key, (_, path) in sorted(_SCHEMA.items())]
    return "\n".join(lines) + "\n"


def load_config(path: str | Path | None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    if path is not None:
        cfg = parse_config(Path(path).read_text(), source=str(path))
    else:
        cfg = ExperimentConfig()
    if overrides:
        apply_assignments(cfg, overrides, source="flags")
    return cfg


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()[:12]
