"""Experiment configuration: flat ``key = value`` files with ``#`` comments."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from .errors import ParameterError
from .numerics import ACTIVATIONS
from .random_index import MODES
from .trainer import TrainConfig


class ConfigError(ParameterError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


MODEL_KINDS = ("baseline", "nrp")
DTYPES = ("float32", "float64")


@dataclass(frozen=True)
class ExperimentConfig:
    train_path: str = ""
    valid_path: str = ""
    test_path: str = ""
    vocab_cache: str = ""
    output_dir: str = "runs/default"
    eos_token: str = "<eos>"
    pad_start: bool = False

    model: str = "nrp"
    vocab_size: int = 10_000
    n: int = 5
    m: int = 128
    h: int = 256
    activation: str = "relu"
    k: int = 7_500
    s: int = 4
    mode: str = "ternary"

    init_range: float = 0.01
    dropout: float = 0.05
    dropout_output: bool = False
    lr: float = 0.5
    lr_decay: float = 0.5
    clip: float = 1.0
    patience: int = 3
    batch_size: int = 128
    max_epochs: int = 50
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(name, msg)

        need(self.model in MODEL_KINDS, "model", f"must be one of {MODEL_KINDS}")
        need(self.activation in ACTIVATIONS, "activation", f"must be one of {ACTIVATIONS}")
        need(self.mode in MODES, "mode", f"must be one of {MODES}")
        need(self.dtype in DTYPES, "dtype", f"must be one of {DTYPES}")
        for name in ("vocab_size", "m", "h", "k", "s", "patience", "batch_size", "max_epochs"):
            need(getattr(self, name) >= 1, name, "must be >= 1")
        need(self.n >= 2, "n", "must be >= 2")
        need(self.s <= self.k, "s", f"must be <= k ({self.k})")
        need(0 <= self.dropout < 1, "dropout", "must be in [0, 1)")
        need(self.lr > 0, "lr", "must be > 0")
        need(0 < self.lr_decay < 1, "lr_decay", "must be in (0, 1)")
        need(self.clip > 0, "clip", "must be > 0")
        need(self.init_range > 0, "init_range", "must be > 0")
        need(self.seed >= 0, "seed", "must be >= 0")

    def train_config(self) -> TrainConfig:
        return TrainConfig(initial_lr=self.lr, lr_decay=self.lr_decay, clip_threshold=self.clip,
                           patience=self.patience, batch_size=self.batch_size,
                           dropout_p=self.dropout, max_epochs=self.max_epochs, seed=self.seed)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = ["# effective configuration (defaults resolved)"]
        for f in fields(self):
            lines.append(f"{f.name} = {format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], base: "ExperimentConfig | None" = None):
        base = base if base is not None else cls()
        known = {f.name: f for f in fields(cls)}
        changes = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
            changes[key] = coerce(key, raw, type(getattr(base, key)))
        return dataclasses.replace(base, **changes)

    @classmethod
    def from_file(cls, path: str | Path, overrides: Mapping[str, Any] | None = None):
        values = parse_flat(Path(path).read_text())
        if overrides:
            values.update(overrides)
        return cls.from_mapping(values)


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def coerce(key: str, raw, kind: type):
    if not isinstance(raw, str):
        if kind is float and isinstance(raw, int) and not isinstance(raw, bool):
            return float(raw)
        if isinstance(raw, kind):
            return raw
        raise ConfigError(key, f"expected {kind.__name__}, got {raw!r}")
    text = raw.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text.replace("_", ""))
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r} as {kind.__name__}") from None
    return text


def parse_flat(text: str) -> dict[str, str]:
    """``key = value`` per line; ``#`` starts a comment; later keys win."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out
