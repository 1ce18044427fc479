"""``key = value`` config files mapped onto (nested) dataclasses.

Nested dataclass fields are addressed with dotted keys, e.g.
``model.projector.kind = grkan``.  ``#`` starts a comment; unknown keys
and malformed lines are rejected with the offending line number.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from ..errors import ParseError

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def parse_pairs(text, path=None):
    """Return ``{key: (raw_value, line_number)}`` from config text."""
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", path, lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError("missing key", path, lineno)
        if key in pairs:
            raise ParseError(f"duplicate key {key!r}", path, lineno)
        pairs[key] = (value, lineno)
    return pairs


def _coerce(value, current, key, path, lineno):
    try:
        if isinstance(current, bool):
            low = value.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
    except ValueError:
        kind = type(current).__name__
        raise ParseError(f"{key}: cannot read {value!r} as {kind}", path, lineno) from None
    return value


def _fields(obj, prefix=""):
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            yield from _fields(value, f"{prefix}{f.name}.")
        else:
            yield f"{prefix}{f.name}", obj, f.name


def apply_pairs(obj, pairs, path=None):
    """Overwrite dataclass fields of ``obj`` in place from parsed pairs."""
    known = {key: (owner, name) for key, owner, name in _fields(obj)}
    for key, (value, lineno) in pairs.items():
        if key not in known:
            raise ParseError(f"unknown key {key!r}", path, lineno)
        owner, name = known[key]
        setattr(owner, name, _coerce(value, getattr(owner, name), key, path, lineno))
    return obj


def loads(text, cls, path=None):
    obj = apply_pairs(cls(), parse_pairs(text, path), path)
    validate = getattr(obj, "validate", None)
    return validate() if validate else obj


def load(path, cls):
    path = Path(path)
    return loads(path.read_text(encoding="utf-8"), cls, path)


def dumps(obj):
    """Canonical text form (every field, declaration order)."""
    lines = []
    for key, owner, name in _fields(obj):
        value = getattr(owner, name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
