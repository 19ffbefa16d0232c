"""Stable CSV and SVG output."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

SVG_SIZE = 400


def fmt(x) -> str:
    """Locale-independent text for a table cell; floats get 12 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if x == 0.0:
            return "0"
        return format(x, ".12g")
    if x is None:
        return ""
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows), encoding="utf-8")
    return path


def _coord(x: float) -> str:
    s = format(round(x, 4), ".4f").rstrip("0").rstrip(".")
    return s or "0"


def svg_text(W, size: int = SVG_SIZE) -> str:
    """Grayscale heatmap: value 0 is white, 1 is black; (0, 0) at top left."""
    b = W.breaks * size
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}" shape-rendering="crispEdges">',
    ]
    for i in range(W.k):
        for j in range(W.k):
            g = int(round(255 * (1.0 - float(np.clip(W.values[i, j], 0.0, 1.0)))))
            lines.append(
                f'<rect x="{_coord(b[j])}" y="{_coord(b[i])}" width="{_coord(b[j + 1] - b[j])}" '
                f'height="{_coord(b[i + 1] - b[i])}" fill="#{g:02x}{g:02x}{g:02x}"/>'
            )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_svg(W, path, size: int = SVG_SIZE) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg_text(W, size), encoding="utf-8")
    return path


def write_graphon(W, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    W.save(path)
    return path
