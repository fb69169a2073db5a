"""Run configuration: TOML loading, overrides, and content hashing."""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import asdict, dataclass, fields, replace

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - 3.10 fallback
    import tomli as tomllib

from .errors import ConfigError

_ENV_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")

_SECTIONS = ("paths", "backends", "options")


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run needs, with benchmark-scale defaults."""

    # paths
    index: str = ""
    web_fixtures: str = ""
    store: str = ""
    reports: str = "reports"

    # backend names, resolved against the registries in backends.py
    segmenter: str = "stub"
    extractor: str = "stub"
    material_oracle: str = "stub"
    proposal_source: str = "grid"
    rgb_filter: str = "stub"

    # options
    k: int = 30
    sigma: float = 0.15
    tau: float = 0.5
    window: int = 32
    stride: int = 32
    patch_size: int = 8
    feature_dim: int = 8
    in_house_fraction: float = 1.0
    seed: int = 0
    segmenter_cutoff: float = 0.9
    background_fill: tuple[float, float, float] = (1.0, 1.0, 1.0)
    allow_partial: bool = False
    visible_only: bool = True
    jobs: int = 1

    def config_hash(self) -> str:
        """Stable digest of the resolved config; names run directories."""
        payload = json.dumps(asdict(self), sort_keys=True, default=list)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def require_paths(self, *names: str) -> None:
        """Check that the named path fields point at existing files/dirs."""
        missing = []
        for name in names:
            value = getattr(self, name)
            if not value or not os.path.exists(value):
                missing.append(f"{name}={value!r}")
        if missing:
            raise ConfigError(
                "missing required paths: " + ", ".join(missing)
            )

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must be in [0, 1], got {self.tau}")
        for name in ("window", "stride", "patch_size", "jobs"):
            value = getattr(self, name)
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if self.feature_dim < 8:
            raise ConfigError(
                f"feature_dim must be >= 8, got {self.feature_dim}"
            )
        if not 0.0 <= self.in_house_fraction <= 1.0:
            raise ConfigError(
                "in_house_fraction must be in [0, 1], got "
                f"{self.in_house_fraction}"
            )
        if len(self.background_fill) != 3:
            raise ConfigError("background_fill needs exactly 3 channels")


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _interpolate(value):
    """Expand ``${NAME}`` references in string values from the environment."""
    if not isinstance(value, str):
        return value

    def sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in os.environ:
            raise ConfigError(f"environment variable {name} is not set")
        return os.environ[name]

    return _ENV_PATTERN.sub(sub, value)


def _coerce(name: str, value):
    spec = _FIELDS[name]
    value = _interpolate(value)
    if spec.type in ("float", float) and isinstance(value, int):
        value = float(value)
    if name == "background_fill":
        if not isinstance(value, (list, tuple)):
            raise ConfigError("background_fill must be a 3-item array")
        value = tuple(float(v) for v in value)
    return value


def load_config(path: str, overrides: dict | None = None) -> RunConfig:
    """Read a TOML config with [paths]/[backends]/[options] sections.

    ``overrides`` maps field names to replacement values (CLI flags win
    over the file). Unknown keys anywhere raise ConfigError rather than
    being silently dropped.
    """
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}")

    values: dict = {}
    for section, table in raw.items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in table.items():
            if key not in _FIELDS:
                raise ConfigError(f"unknown config key {section}.{key}")
            values[key] = _coerce(key, value)

    # Relative paths resolve against the config file's directory.
    base = os.path.dirname(os.path.abspath(path))
    for key in ("index", "web_fixtures", "store", "reports"):
        if values.get(key):
            values[key] = os.path.normpath(os.path.join(base, values[key]))

    config = RunConfig(**values)
    if overrides:
        config = apply_overrides(config, overrides)
    config.validate()
    return config


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    cleaned = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown config override {key!r}")
        cleaned[key] = _coerce(key, value)
    if not cleaned:
        return config
    return replace(config, **cleaned)
