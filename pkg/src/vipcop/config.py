"""Experiment configuration loading: TOML file plus override layers."""

from __future__ import annotations

import sys
from pathlib import Path

from pydantic import ValidationError

from .service.schemas import ExperimentConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Unusable experiment configuration."""


def _deep_merge(base: dict, overlay: dict) -> dict:
    out = dict(base)
    for key, value in overlay.items():
        if value is None:
            continue
        if isinstance(value, dict):
            merged = _deep_merge(out.get(key) if isinstance(out.get(key), dict) else {}, value)
            if merged or isinstance(out.get(key), dict):
                out[key] = merged
        else:
            out[key] = value
    return out


def load_config(
    path: str | Path | None = None, overrides: dict | None = None
) -> ExperimentConfig:
    """Parse a TOML config file and apply the override layer on top.

    Either a file or enough overrides to satisfy the model must be given.
    """
    data: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if overrides:
        data = _deep_merge(data, overrides)
    try:
        return ExperimentConfig(**data)
    except ValidationError as exc:
        first = exc.errors()[0]
        location = ".".join(str(p) for p in first["loc"]) or "config"
        raise ConfigError(f"{location}: {first['msg']}") from exc
