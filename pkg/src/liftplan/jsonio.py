"""Deterministic JSON/CSV serialisation helpers.

Floats are printed with 17 significant digits so files round-trip float64
exactly and byte-identical reruns can be diffed.
"""

from __future__ import annotations

import math


def format_float(x: float) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
    return format(float(x), ".17g")


def dump_json(obj, indent: int = 0) -> str:
    """JSON writer with fixed float formatting and stable ordering."""
    pad = " " * indent

    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        inner = ",\n".join(
            f'{pad}  {dump_json(str(k))}: {dump_json(v, indent + 2)}'
            for k, v in obj.items()
        )
        return "{\n" + inner + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        flat = all(not isinstance(v, (dict, list, tuple)) for v in obj)
        if flat:
            return "[" + ", ".join(dump_json(v) for v in obj) + "]"
        inner = ",\n".join(f"{pad}  {dump_json(v, indent + 2)}" for v in obj)
        return "[\n" + inner + "\n" + pad + "]"
    # numpy scalars and arrays
    if hasattr(obj, "tolist"):
        return dump_json(obj.tolist(), indent)
    raise TypeError(f"cannot serialise {type(obj).__name__}")
