"""key=value configuration files.

Lines are ``key = value``; ``#`` starts a comment and ``[section]`` prefixes the
following keys with ``section.``. Values are parsed as Python literals when
possible (numbers, booleans, lists, quoted strings) and kept as plain strings
otherwise.
"""

from __future__ import annotations

import ast
import hashlib
import json
from collections.abc import Mapping
from pathlib import Path


class ConfigError(ValueError):
    pass


_BOOLS = {"true": True, "false": False, "yes": True, "no": False}


def parse_value(text: str):
    t = text.strip()
    if t.lower() in _BOOLS:
        return _BOOLS[t.lower()]
    try:
        return ast.literal_eval(t)
    except (ValueError, SyntaxError):
        return t


def parse_config(text: str, source: str = "<config>") -> dict:
    out: dict = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ConfigError(f"{source}:{lineno}: empty section name")
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: missing key")
        out[f"{section}.{key}" if section else key] = parse_value(value)
    return out


def load_config(path: str | Path) -> dict:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from exc
    return parse_config(text, str(p))


def config_hash(cfg: Mapping) -> str:
    """Short stable digest of an effective configuration."""
    blob = json.dumps(dict(cfg), sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def dump_config(cfg: Mapping) -> str:
    return "".join(f"{k} = {json.dumps(v)}\n" for k, v in sorted(cfg.items()))
