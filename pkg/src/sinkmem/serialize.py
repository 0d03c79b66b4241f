"""Deterministic JSON/CSV emission.

Output files must be byte-identical across reruns, so floats are always
rendered with 17 significant digits (full round-trip precision) and dict
order is the construction order. The stdlib json module does not allow
custom float formatting, hence the small writer below.
"""

from __future__ import annotations

import math
from typing import Any, Iterable, Sequence

import numpy as np


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _escape(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with deterministic float formatting. Accepts numpy types."""

    def render(o: Any, level: int) -> str:
        pad = " " * (indent * level)
        pad_in = " " * (indent * (level + 1))
        if isinstance(o, np.ndarray):
            o = o.tolist()
        if isinstance(o, (np.floating,)):
            o = float(o)
        if isinstance(o, (np.integer,)):
            o = int(o)
        if o is None:
            return "null"
        if isinstance(o, bool):
            return "true" if o else "false"
        if isinstance(o, int):
            return str(o)
        if isinstance(o, float):
            return format_float(o)
        if isinstance(o, str):
            return _escape(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [
                f"{pad_in}{_escape(str(k))}: {render(v, level + 1)}" for k, v in o.items()
            ]
            return "{\n" + ",\n".join(items) + "\n" + pad + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            rendered = [render(v, level + 1) for v in o]
            if all(len(r) <= 24 and "\n" not in r for r in rendered):
                return "[" + ", ".join(rendered) + "]"
            return "[\n" + ",\n".join(pad_in + r for r in rendered) + "\n" + pad + "]"
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return render(obj, 0) + "\n"


def dump_json(obj: Any, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """CSV with '\\n' terminators and 17-digit floats; no quoting needed for
    the numeric/label columns used here."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for cell in row:
                if isinstance(cell, (float, np.floating)):
                    cells.append(format_float(float(cell)))
                elif isinstance(cell, (int, np.integer)):
                    cells.append(str(int(cell)))
                else:
                    cells.append(str(cell))
            fh.write(",".join(cells) + "\n")
