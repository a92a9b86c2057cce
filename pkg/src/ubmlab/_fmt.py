"""ASCII serialization with 17 significant digits."""

from __future__ import annotations

import json
import math

import numpy as np


def fmt17(x):
    """A float as 17-significant-digit decimal (round-trips exactly)."""
    return f"{float(x):.17g}"


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt17(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, (complex, np.complexfloating)):
        return _encode([obj.real, obj.imag], indent, level)
    if isinstance(obj, str):
        return json.dumps(obj)  # escapes to ASCII
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}"{k}": {_encode(obj[k], indent, level + 1)}' for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj, indent=2):
    """Deterministic JSON: sorted keys, 17-digit floats, non-finite as null."""
    return _encode(obj, indent, 0) + "\n"
