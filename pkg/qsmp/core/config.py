from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Any

import orjson
import yaml
from pydantic import TypeAdapter, ValidationError

from .errors import ConfigError
from .models import KernelConfig, QuantumConfig, QuantumKernelSpec
from .twolevel import two_level_spec

_ADAPTER: TypeAdapter = TypeAdapter(KernelConfig)


def _describe(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{where}: {err['msg']}")
    return "; ".join(parts)


def parse_kernel_config(
    document: Any,
    overrides: dict[str, Any] | None = None,
    grid_defaults: tuple[float, float] | None = None,
) -> KernelConfig:
    """Validate a kernel document; overrides beat the document, which beats grid_defaults."""
    if not isinstance(document, dict):
        raise ConfigError("CONFIG_INVALID", "config document must be a mapping")
    document = dict(document)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    grid = dict(document.get("grid") or {})
    if grid_defaults is not None:
        grid.setdefault("step", grid_defaults[0])
        grid.setdefault("horizon", grid_defaults[1])
    if "step" in overrides:
        grid["step"] = overrides["step"]
    if "horizon" in overrides:
        grid["horizon"] = overrides["horizon"]
    if grid:
        document["grid"] = grid
    if "seed" in overrides:
        document["seed"] = overrides["seed"]
    try:
        return _ADAPTER.validate_python(document)
    except ValidationError as exc:
        raise ConfigError("CONFIG_INVALID", _describe(exc)) from exc


def load_kernel_config(
    path: str | Path,
    overrides: dict[str, Any] | None = None,
    grid_defaults: tuple[float, float] | None = None,
) -> KernelConfig:
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError("CONFIG_NOT_FOUND", f"config file {config_path} does not exist")
    try:
        document = yaml.safe_load(config_path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("CONFIG_YAML", f"{config_path}: {exc}") from exc
    return parse_kernel_config(document, overrides, grid_defaults)


def config_echo(config: KernelConfig) -> dict[str, Any]:
    return config.model_dump(mode="json", exclude_none=True)


def config_hash(config: KernelConfig) -> str:
    canonical = orjson.dumps(config.model_dump(mode="json"), option=orjson.OPT_SORT_KEYS)
    return hashlib.sha256(canonical).hexdigest()


def quantum_spec(config: QuantumConfig) -> QuantumKernelSpec:
    if config.kernel is not None:
        return config.kernel
    return two_level_spec(config.two_level)
