"""Deterministic JSON serialisation with 17-significant-digit floats."""
from __future__ import annotations

import json
import math


def fmt17(x: float) -> str:
    """Decimal rendering with 17 significant digits (round-trip exact)."""
    return f"{float(x):.17g}"


def dumps17(obj) -> str:
    """Canonical JSON: sorted keys, compact separators, 17-digit floats.

    Non-finite floats are rendered as JSON strings ("inf", "-inf", "nan")
    so every artifact stays strictly standard JSON.
    """
    return _encode(obj)


def _encode(obj) -> str:
    if isinstance(obj, dict):
        items = sorted(obj.items(), key=lambda kv: str(kv[0]))
        inner = ",".join(f"{json.dumps(str(k))}:{_encode(v)}" for k, v in items)
        return "{" + inner + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if math.isnan(obj):
            return '"nan"'
        if math.isinf(obj):
            return '"inf"' if obj > 0 else '"-inf"'
        return fmt17(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialise object of type {type(obj).__name__}")
