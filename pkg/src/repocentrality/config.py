"""Run settings: defaults, then a TOML/JSON file, then REPOCENT_* env vars,
then explicit command-line flags."""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .events import DEFAULT_KEYWORDS
from .graph import DEFAULT_MAX_ITER, DEFAULT_TOL

ENV_PREFIX = "REPOCENT_"


class ConfigError(ValueError):
    pass


def _default_threads() -> int:
    return max(1, os.cpu_count() or 1)


@dataclass(frozen=True)
class Settings:
    seed: int = 0
    threads: int = field(default_factory=_default_threads)
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    window: int = 1
    stride: int = 1
    horizons: int = 10
    test_fraction: float = 0.2
    horizon_end: int | None = None
    keywords: tuple[str, ...] = DEFAULT_KEYWORDS
    top_k: int = 10
    importance_repeats: int = 5
    # keyword arguments for fit_aft / fit_hazard and for SynthConfig
    aft: dict = field(default_factory=dict)
    hazard: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)

    def validate(self) -> "Settings":
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.tol <= 0 or self.max_iter < 1:
            raise ConfigError("tol must be positive and max_iter >= 1")
        if self.window < 1 or self.stride < 1 or self.horizons < 1:
            raise ConfigError("window, stride and horizons must be >= 1")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.top_k < 1 or self.importance_repeats < 1:
            raise ConfigError("top_k and importance_repeats must be >= 1")
        return self


_SCALARS = {f.name: f for f in fields(Settings) if f.name not in ("aft", "hazard", "synth", "keywords")}
_TABLES = ("aft", "hazard", "synth")


def _coerce(name: str, value: Any) -> Any:
    if name == "horizon_end":
        return None if value in (None, "", "none") else int(value)
    if name == "keywords":
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        return tuple(str(v) for v in value)
    kind = type(getattr(Settings(threads=1), name))
    try:
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind is float:
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot interpret {value!r} as {kind.__name__}") from None
    return value


def read_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file {path} not found")
    try:
        if path.suffix == ".json":
            data = json.loads(path.read_text())
        else:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a table")
    return data


def apply_mapping(settings: Settings, data: Mapping[str, Any]) -> Settings:
    updates = {}
    for key, value in data.items():
        key = key.replace("-", "_")
        if key in _TABLES:
            if not isinstance(value, Mapping):
                raise ConfigError(f"[{key}] must be a table")
            updates[key] = {**getattr(settings, key), **dict(value)}
        elif key in _SCALARS or key == "keywords":
            updates[key] = _coerce(key, value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return replace(settings, **updates)


def env_overrides(environ: Mapping[str, str] | None = None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name in [*_SCALARS, "keywords"]:
        value = environ.get(ENV_PREFIX + name.upper())
        if value is not None and value != "":
            out[name] = value
    return out


def load_settings(
    config_path: str | Path | None = None,
    cli: Mapping[str, Any] | None = None,
    environ: Mapping[str, str] | None = None,
) -> Settings:
    environ = os.environ if environ is None else environ
    settings = Settings()
    config_path = config_path or environ.get(ENV_PREFIX + "CONFIG") or None
    if config_path:
        settings = apply_mapping(settings, read_config_file(config_path))
    settings = apply_mapping(settings, env_overrides(environ))
    if cli:
        settings = apply_mapping(settings, {k: v for k, v in cli.items() if v is not None})
    return settings.validate()
