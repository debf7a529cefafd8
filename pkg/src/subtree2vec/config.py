"""Flat ``key=value`` run configuration with command-line overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .trainer import TrainConfig

ENV_VAR = "S2V_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig(TrainConfig):
    corpus: str = ""
    vocab: str = ""
    checkpoint: str = "model.json"
    index: str = ""
    report_dir: str = ""
    jobs: int = 1

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in vars(self).items() if k in names})


def _coerce(name: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw.strip()


def parse_config_text(text: str) -> dict:
    defaults = {f.name: f.default for f in fields(RunConfig)}
    values = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"config line {n}: expected key=value")
        if key not in defaults:
            raise ConfigError(f"config line {n}: unknown key {key!r}")
        values[key] = _coerce(key, raw, defaults[key])
    return values


def load_run_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """File values (``path`` or ``$S2V_CONFIG``) updated by non-None ``overrides``."""
    path = path or os.environ.get(ENV_VAR)
    values = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {path} not found")
        values = parse_config_text(p.read_text(encoding="utf-8"))
    known = {f.name for f in fields(RunConfig)}
    for k, v in (overrides or {}).items():
        if k not in known:
            raise ConfigError(f"unknown config key {k!r}")
        if v is not None:
            values[k] = v
    try:
        return RunConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
