"""Canonical JSON emission for byte-stable CLI outputs.

Floats are rendered with %.17g (full round-trip precision), object keys
are sorted, and separators are fixed, so identical inputs produce
byte-identical files.  Reading back uses the stock ``json`` module.
"""

from __future__ import annotations

import math

__all__ = ["dump_canonical_json", "format_float"]


def format_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"non-finite float {x!r} cannot be serialized")
    s = format(float(x), ".17g")
    # keep integer-valued floats recognizably floats
    if "e" not in s and "E" not in s and "." not in s:
        s += ".0"
    return s


def _render(obj, out: list) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        import json as _json

        out.append(_json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {key!r}")
            if i:
                out.append(",")
            _render(key, out)
            out.append(":")
            _render(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _render(item, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} canonically")


def dump_canonical_json(obj) -> str:
    out: list = []
    _render(obj, out)
    out.append("\n")
    return "".join(out)
