"""Flat ``key = value`` text documents mapped onto dataclasses."""
from __future__ import annotations

import dataclasses
import types
import typing
from pathlib import Path


class ConfigError(ValueError):
    pass


def read_kv(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _coerce(value: str, tp, key: str):
    origin = typing.get_origin(tp)
    if origin is typing.Union or origin is types.UnionType:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value.lower() in ("", "none", "null"):
            return None
        return _coerce(value, args[0], key)
    try:
        if tp is bool:
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if tp is int:
            return int(value)
        if tp is float:
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {tp.__name__}") from None
    return value


def from_kv(cls, mapping: dict[str, str], prefix: str = ""):
    """Build dataclass ``cls`` from string values; unknown keys are errors."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in mapping.items():
        if prefix:
            if not key.startswith(prefix):
                continue
            key = key[len(prefix):]
        if key not in names:
            raise ConfigError(f"unknown key {prefix + key!r} for {cls.__name__}")
        kwargs[key] = _coerce(value, hints[key], prefix + key)
    return cls(**kwargs)


def to_kv(obj, prefix: str = "") -> str:
    lines = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            continue
        lines.append(f"{prefix}{f.name} = {'' if value is None else value}")
    return "\n".join(lines) + "\n"
