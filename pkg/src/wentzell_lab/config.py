"""Sectioned key-value configuration files.

Grammar (one statement per line)::

    # comment
    schema_version = 1
    [section]
    key = value        # trailing comments allowed

Values are typed by the schema below.  Lists are comma separated.  Unknown
sections or keys, duplicates, and bad values are reported with their line
number.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .expr import ExpressionError, parse_expression

__all__ = ["SCHEMA_VERSION", "SCHEMA", "ConfigError", "Config", "parse_config", "load_config"]

SCHEMA_VERSION = 1

_FLOAT = "float"
_INT = "int"
_EXPR = "expr"
_STR = "str"
_FLOATS = "floats"
_EXPRS = "exprs"
_WORDS = "words"
_SWEEP = "sweep"

SCHEMA: dict[str, dict[str, str]] = {
    "run": {"seed": _INT},
    "grid": {"dimension": _INT, "side_lengths": _FLOATS, "resolution": _FLOATS},
    "exponents": {
        "p": _EXPR,
        "q": _EXPR,
        "p1": _EXPR,
        "p2": _EXPR,
        "p3": _EXPR,
        "q1": _EXPR,
        "q2": _EXPR,
    },
    "coefficients": {"alpha": _EXPR, "beta": _EXPR},
    "initial": {"u0": _EXPR, "v0": _EXPR},
    "flow": {
        "tau": _FLOAT,
        "horizon": _FLOAT,
        "gtol": _FLOAT,
        "max_iter": _INT,
        "eps_reg": _FLOAT,
    },
    "output": {"snapshot_stride": _INT, "trajectory": _STR, "snapshots": _STR},
    "constants": {
        "a": _FLOAT,
        "b": _FLOAT,
        "c": _FLOAT,
        "p": _FLOAT,
        "q": _FLOAT,
        "d1": _FLOAT,
        "d2": _FLOAT,
        "c_omega": _FLOAT,
        "diagnostics": _INT,
    },
    "unknowns": {
        k: _FLOAT
        for k in (
            "c_star_p",
            "c_star_q",
            "c_eps_p",
            "c_eps_q",
            "kappa_p",
            "kappa_q",
            "g_p",
            "g_q",
            "c1",
        )
    },
    "verify": {
        "checks": _WORDS,
        "pairs": _INT,
        "horizon": _FLOAT,
        "tol": _FLOAT,
        "r": _EXPRS,
        "times": _FLOATS,
        "scales": _FLOATS,
        "t_star": _FLOAT,
    },
    "sweep": {k: _SWEEP for k in ("a", "b", "c", "p", "q", "d1", "d2")},
}

_SECTION = re.compile(r"^\[\s*([A-Za-z_][A-Za-z0-9_]*)\s*\]$")
_ASSIGN = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, source: str = "config"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass
class Config:
    """Parsed values, ``sections[section][key]``, plus source line numbers."""

    sections: dict[str, dict[str, object]] = field(default_factory=dict)
    lines: dict[tuple[str, str], int] = field(default_factory=dict)
    source: str = "config"

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def section(self, name: str) -> dict[str, object]:
        return dict(self.sections.get(name, {}))

    def has(self, section: str, key: str) -> bool:
        return key in self.sections.get(section, {})

    def error(self, section: str, key: str, message: str) -> ConfigError:
        return ConfigError(f"[{section}] {key}: {message}", self.lines.get((section, key)), self.source)

    def set(self, section: str, key: str, value) -> None:
        self.sections.setdefault(section, {})[key] = value


def _number(text: str, kind: str):
    try:
        return int(text) if kind == _INT else float(text)
    except ValueError:
        raise ValueError(f"expected {'an integer' if kind == _INT else 'a number'}, got {text!r}") from None


def _split(text: str) -> list[str]:
    # commas inside parentheses belong to function calls
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur).strip())
    if len(parts) == 1 and parts[0] == "":
        return []
    if any(p == "" for p in parts):
        raise ValueError("empty list item")
    return parts


def _convert(kind: str, text: str):
    if kind in (_INT, _FLOAT):
        return _number(text, kind)
    if kind == _STR:
        if not text:
            raise ValueError("empty value")
        return text
    if kind == _EXPR:
        parse_expression(text)
        return text
    if kind == _FLOATS:
        items = [_number(t, _FLOAT) for t in _split(text)]
        if not items:
            raise ValueError("empty list")
        return items
    if kind == _EXPRS:
        items = _split(text)
        for t in items:
            parse_expression(t)
        return items
    if kind == _WORDS:
        items = _split(text)
        for t in items:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", t):
                raise ValueError(f"bad name {t!r}")
        return items
    if kind == _SWEEP:
        out = []
        for t in _split(text):
            try:
                out.append(float(t))
            except ValueError:
                if t not in ("p", "q"):
                    raise ValueError(f"sweep values are numbers, 'p' or 'q'; got {t!r}") from None
                out.append(t)
        if not out:
            raise ValueError("empty list")
        return out
    raise AssertionError(kind)


def parse_config(text: str, source: str = "config") -> Config:
    cfg = Config(source=source)
    section: str | None = None
    version_line = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1)
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", lineno, source)
            if section in cfg.sections:
                raise ConfigError(f"duplicate section [{section}]", lineno, source)
            cfg.sections[section] = {}
            continue
        m = _ASSIGN.match(line)
        if not m:
            raise ConfigError(f"cannot parse line {raw.strip()!r}", lineno, source)
        key, value = m.group(1), m.group(2).strip()
        if section is None:
            if key != "schema_version":
                raise ConfigError(f"key {key!r} outside any section", lineno, source)
            try:
                version = int(value)
            except ValueError:
                raise ConfigError(f"schema_version must be an integer, got {value!r}", lineno, source) from None
            if version != SCHEMA_VERSION:
                raise ConfigError(
                    f"unsupported schema_version {version} (expected {SCHEMA_VERSION})", lineno, source
                )
            version_line = lineno
            continue
        kind = SCHEMA[section].get(key)
        if kind is None:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno, source)
        if key in cfg.sections[section]:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", lineno, source)
        try:
            cfg.sections[section][key] = _convert(kind, value)
        except (ValueError, ExpressionError) as exc:
            raise ConfigError(f"[{section}] {key}: {exc}", lineno, source) from None
        cfg.lines[(section, key)] = lineno
    if version_line is None:
        raise ConfigError("missing schema_version", None, source)
    return cfg


def load_config(path: str | Path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_config(text, source=str(path))
