"""Flat key=value config files shared by the model, trainer, and generator.

Syntax: one `key = value` per line; blank lines and `#` comments ignored;
`include <path>` splices another file (relative to the including file), with
later assignments overriding earlier ones.
"""

from __future__ import annotations

import dataclasses
import os
import typing


def parse_flat_config(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("include ") or line.startswith("include\t"):
                target = line.split(None, 1)[1].strip()
                out.update(load_config_file(os.path.join(os.path.dirname(path), target)))
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _coerce(value: str, typ, key: str):
    origin = typing.get_origin(typ)
    if origin is tuple:
        items = [v.strip() for v in value.split(",") if v.strip()]
        return tuple(items)
    if typ is bool:
        low = value.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {key!r}: cannot parse bool from {value!r}")
    try:
        if typ is int:
            return int(value)
        if typ is float:
            return float(value)
    except ValueError:
        raise ValueError(f"config key {key!r}: cannot parse {typ.__name__} from {value!r}") from None
    return value


def dataclass_from_mapping(cls, mapping: dict[str, str], source: str = "config"):
    """Build a config dataclass from string key=value pairs.

    Unknown keys are an error (typos must not silently fall back to defaults).
    """
    by_name = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - set(by_name))
    if unknown:
        raise ValueError(
            f"{source}: unknown keys {unknown}; valid keys: {sorted(by_name)}"
        )
    kwargs = {}
    hints = typing.get_type_hints(cls)
    for key, value in mapping.items():
        kwargs[key] = _coerce(value, hints[key.strip()], key)
    return cls(**kwargs)


def dataclass_to_text(obj) -> str:
    lines = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, tuple):
            value = ",".join(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
