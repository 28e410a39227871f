"""Strict plain-text experiment configs.

Format: one ``key = value`` per line, ``#`` comments, blank lines ignored.
Parsing is schema-checked: unknown keys are rejected by name and missing
required keys are reported together.  Values are plain scalars, comma
lists, or ``|``-separated groups of comma lists (used for angle sets).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class Field:
    parse: callable
    required: bool = False
    default: object = None


def _scalar(conv):
    def parse(text):
        return conv(text)

    return parse


def str_field(required=False, default=None):
    return Field(_scalar(str), required, default)


def int_field(required=False, default=None):
    return Field(_scalar(int), required, default)


def float_field(required=False, default=None):
    return Field(_scalar(float), required, default)


def bool_field(required=False, default=None):
    def parse(text):
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")

    return Field(parse, required, default)


def list_field(conv, required=False, default=None):
    def parse(text):
        return [conv(tok.strip()) for tok in text.split(",") if tok.strip() != ""]

    return Field(parse, required, default)


def groups_field(conv, required=False, default=None):
    """Groups like '55,110|25,55,85': list of lists."""

    def parse(text):
        return [
            [conv(tok.strip()) for tok in grp.split(",") if tok.strip() != ""]
            for grp in text.split("|")
            if grp.strip() != ""
        ]

    return Field(parse, required, default)


def parse_config(text: str, schema: dict, source: str = "<config>") -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = (value, lineno)

    unknown = [k for k in raw if k not in schema]
    if unknown:
        raise ConfigError(f"{source}: unknown keys: {', '.join(sorted(unknown))}")
    missing = [k for k, f in schema.items() if f.required and k not in raw]
    if missing:
        raise ConfigError(f"{source}: missing required keys: {', '.join(sorted(missing))}")

    out = {}
    for key, field in schema.items():
        if key in raw:
            value, lineno = raw[key]
            try:
                out[key] = field.parse(value)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
        else:
            out[key] = field.default
    return out


def load_config(path, schema: dict) -> dict:
    path = Path(path)
    return parse_config(path.read_text(), schema, source=str(path))
