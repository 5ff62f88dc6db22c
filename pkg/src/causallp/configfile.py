"""Flat ``key = value`` config files.

Blank lines and lines starting with ``#`` are ignored. Keys must name a
field of the target dataclass; anything else is an error so typos surface.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .errors import ConfigError


def parse_config(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {line_no}: expected 'key = value'")
        if key in out:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path) -> dict[str, str]:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _convert(annotation: str, key: str, value: str):
    ann = str(annotation)
    if "None" in ann and value.lower() in ("none", ""):
        return None
    try:
        if ann.startswith("int"):
            return int(value)
        if ann.startswith("float"):
            return float(value)
        if ann.startswith("bool"):
            if value.lower() not in ("true", "false", "1", "0"):
                raise ValueError(value)
            return value.lower() in ("true", "1")
    except ValueError:
        raise ConfigError(f"{key}: cannot read {value!r} as {ann}") from None
    if ann.startswith("str"):
        return value
    raise ConfigError(f"{key}: field of type {ann} cannot be set from a config file")


def coerce_fields(cls, raw: dict, skip=()) -> dict:
    """Convert string values to the field types of dataclass ``cls``."""
    types = {f.name: f.type for f in dataclasses.fields(cls) if f.name not in skip}
    out = {}
    for key, value in raw.items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}; expected one of {sorted(types)}")
        out[key] = _convert(types[key], key, value) if isinstance(value, str) else value
    return out


def format_config(values: dict) -> str:
    return "".join(f"{k} = {'none' if v is None else v}\n" for k, v in values.items())
