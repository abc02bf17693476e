"""Config file loading (TOML or JSON) with strict key checking."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class Config:
    """Run parameters shared by the CLI subcommands.

    Every key may also be set per-run by a CLI flag, which wins over the
    file value.
    """

    seed: int = 0
    family: str = "random_forest"
    features: str = "attention"
    trees: int = 100
    c: float = 1.0
    gamma: float | None = None
    pca_target: float = 0.99
    episodes: int = 6
    batch_size: int = 10
    eval_fraction: float = 0.5
    students: list[str] | None = None
    host: str = "127.0.0.1"
    port: int = 8000


_FIELD_NAMES = {f.name for f in fields(Config)}


def load_config(path: str | Path | None) -> Config:
    """Parse a .toml or .json config file; unknown keys are errors."""
    if path is None:
        return Config()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text()
    if path.suffix == ".toml":
        import tomli

        try:
            raw = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML ({exc})") from exc
    elif path.suffix == ".json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    else:
        raise ConfigError(
            f"config file {path} must end in .toml or .json"
        )
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a table/object")
    unknown = set(raw) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    try:
        return Config(**raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
