"""Flat ``key = value`` configuration files.

One setting per line, ``#`` starts a comment. Keys are the fields of
:class:`QrnConfig` and :class:`TrainConfig`; ``hidden_size`` and
``forget_bias`` feed both. Unknown keys are errors.
"""
from __future__ import annotations

import dataclasses
from pathlib import Path

from .cell import QrnConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


_SHARED = {"hidden_size", "forget_bias"}


def _fields(cls) -> dict[str, type]:
    return {f.name: type(f.default) for f in dataclasses.fields(cls)}


MODEL_KEYS = _fields(QrnConfig)
TRAIN_KEYS = _fields(TrainConfig)


def _convert(key: str, raw: str, kind: type):
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot read {raw!r} as {kind.__name__}", key) from None


def parse_config(text: str) -> dict[str, object]:
    """Settings as a dict of typed values."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        kind = MODEL_KEYS.get(key) or TRAIN_KEYS.get(key)
        if kind is None:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}", key)
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}", key)
        out[key] = _convert(key, raw, kind)
    return out


def build_configs(settings: dict | None = None, **overrides) -> tuple[QrnConfig, TrainConfig]:
    settings = {**(settings or {}), **overrides}
    for key in settings:
        if key not in MODEL_KEYS and key not in TRAIN_KEYS:
            raise ConfigError(f"unknown config key {key!r}", key)
    model = {k: v for k, v in settings.items() if k in MODEL_KEYS}
    train = {k: v for k, v in settings.items() if k in TRAIN_KEYS}
    try:
        return QrnConfig(**model), TrainConfig(**train)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def load_config(path, **overrides) -> tuple[QrnConfig, TrainConfig]:
    path = Path(path)
    return build_configs(parse_config(path.read_text(encoding="utf-8")), **overrides)


def format_config(model: QrnConfig, train: TrainConfig) -> str:
    lines = [f"{k} = {v}" for k, v in dataclasses.asdict(model).items()]
    lines += [f"{k} = {v}" for k, v in dataclasses.asdict(train).items() if k not in _SHARED]
    return "\n".join(lines) + "\n"
