"""Run configuration: JSON config files, CLI overrides and derived seeds."""

import json
import logging
import zlib
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from .errors import ConfigError
from .models import LoadSettings, StrategyConfig

logger = logging.getLogger(__name__)


def _read_object(path: Path) -> dict[str, Any]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def _is_manifest(data: dict[str, Any]) -> bool:
    return "input_digests" in data and isinstance(data.get("config"), dict)


def load_config(path: Path) -> dict[str, Any]:
    """Read a JSON object whose keys mirror :class:`StrategyConfig` fields."""
    data = _read_object(path)
    # a run manifest carries the resolved config under "config"
    if _is_manifest(data):
        logger.debug("Reading config from run manifest %s", path)
        return data["config"]
    return data


def load_settings(path: Path | None) -> LoadSettings:
    """Loading settings recorded in a run manifest; defaults for plain config files."""
    if path is None:
        return LoadSettings()
    data = _read_object(path)
    if not _is_manifest(data):
        return LoadSettings()
    try:
        return LoadSettings.model_validate(data.get("load", {}))
    except ValidationError as exc:
        raise ConfigError(f"{path}: invalid load section ({exc.error_count()} errors)") from exc


def merge(base: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """Recursively overlay ``overrides`` on ``base`` (neither is modified)."""
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def resolve_config(
    path: Path | None = None, overrides: dict[str, Any] | None = None
) -> StrategyConfig:
    """Validate the file (if any) with ``overrides`` applied on top."""
    data = load_config(path) if path is not None else {}
    try:
        return StrategyConfig.model_validate(merge(data, overrides or {}))
    except ValidationError as exc:
        details = "; ".join(
            f"{'.'.join(str(part) for part in err['loc']) or 'config'}: {err['msg']}"
            for err in exc.errors()
        )
        raise ConfigError(details) from exc


def derive_seed(seed: int, label: str, epoch: int = 0) -> int:
    """Seed for the ``label`` component at ``epoch`` of a run seeded with ``seed``."""
    entropy = [seed % 2**64, zlib.crc32(label.encode("utf-8")), epoch % 2**64]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])

