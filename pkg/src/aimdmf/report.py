"""Deterministic experiment artifacts: CSV, manifest, report, charts.

Reruns with the same seed, config, and thread count must produce
byte-identical CSVs, so every value is serialized through a fixed rule:
floats with repr() (shortest round-trip form, platform-independent for
equal binary values), ints as decimal, everything else through str().
The manifest separates identity (seed, parameters, file digests) from
telemetry (wall time), so identity can be compared across reruns while
the timing field is free to differ.

Charts are hand-rolled SVG polylines: no plotting dependency, text output,
stable to the byte for identical inputs.
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import Iterable, Optional, Sequence

__all__ = [
    "format_value",
    "write_csv",
    "CsvWriter",
    "file_sha256",
    "write_manifest",
    "md_table",
    "write_report",
    "svg_chart",
    "write_svg_chart",
]


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        # np.float64 subclasses float but repr()s with a wrapper; strip it
        return repr(float(v))
    if isinstance(v, int):
        return str(int(v))
    if v is None:
        return ""
    # numpy scalars expose item(); route them through the native rules
    if hasattr(v, "item") and not isinstance(v, str):
        return format_value(v.item())
    return str(v)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> int:
    """Write rows under the header; returns the number of data rows.

    Values are serialized by format_value; fields containing commas,
    quotes, or newlines are quoted per the usual CSV convention.  Newlines
    are always LF regardless of platform.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_field(format_value(v)) for v in row) + "\n")
            n += 1
    return n


def _field(s: str) -> str:
    if any(c in s for c in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


class CsvWriter:
    """Incremental CSV writer with the same serialization rules as write_csv.

    Long experiments use it to flush partial results batch by batch, so an
    interrupted run still leaves valid rows on disk.
    """

    def __init__(self, path: str, header: Sequence[str]):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self.path = path
        self.rows = 0
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._fh.write(",".join(header) + "\n")

    def write_rows(self, rows: Iterable[Sequence]) -> None:
        for row in rows:
            self._fh.write(",".join(_field(format_value(v)) for v in row) + "\n")
            self.rows += 1
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(
    path: str,
    files: Sequence[str],
    seed: int,
    params: dict,
    wall_time_s: Optional[float] = None,
) -> dict:
    """Write manifest.json next to the artifacts.

    The "identity" object (parameters, seed, and per-file SHA-256 digests)
    is what reruns compare; wall_time_s sits outside it and may differ
    between otherwise identical runs.  File keys are basenames; files must
    already exist.
    """
    digests = {os.path.basename(p): file_sha256(p) for p in files}
    manifest = {
        "identity": {
            "seed": int(seed),
            "params": params,
            "files": digests,
        },
        "wall_time_s": wall_time_s,
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def md_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(format_value(v) for v in row) + " |")
    return "\n".join(lines)


def write_report(path: str, title: str, sections: Sequence[tuple]) -> None:
    """Markdown report: sections are (heading, body) pairs, body a string
    (already formatted, e.g. via md_table) or a list of lines."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    parts = [f"# {title}", ""]
    for heading, body in sections:
        parts.append(f"## {heading}")
        parts.append("")
        if isinstance(body, str):
            parts.append(body)
        else:
            parts.extend(body)
        parts.append("")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))


_PALETTE = ("#1f6fb2", "#c4501e", "#3a8c3f", "#7b5aa6", "#9a6324", "#4a4a4a")


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    return [lo + span * i / (n - 1) for i in range(n)]


def svg_chart(
    series: Sequence[tuple],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    width: int = 640,
    height: int = 400,
    log_y: bool = False,
) -> str:
    """Line chart as an SVG string.

    series is a sequence of (label, xs, ys) triples.  Coordinates are
    rendered to two decimals, so equal inputs give identical bytes.
    """
    import math

    ml, mr, mt, mb = 62.0, 16.0, 34.0, 46.0
    pw, ph = width - ml - mr, height - mt - mb
    xs_all = [float(x) for _, xs, _ in series for x in xs]
    ys_all = [float(y) for _, _, ys in series for y in ys]
    if not xs_all:
        raise ValueError("svg_chart needs at least one point")
    if log_y:
        if min(ys_all) <= 0.0:
            raise ValueError("log_y chart needs strictly positive values")
        ys_all = [math.log10(y) for y in ys_all]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x):
        return ml + pw * (float(x) - x_lo) / (x_hi - x_lo)

    def py(y):
        yv = math.log10(float(y)) if log_y else float(y)
        return mt + ph * (1.0 - (yv - y_lo) / (y_hi - y_lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.2f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{_esc(title)}</text>',
    ]
    for tx in _ticks(x_lo, x_hi):
        x = px(tx)
        out.append(
            f'<line x1="{x:.2f}" y1="{mt:.2f}" x2="{x:.2f}" '
            f'y2="{mt + ph:.2f}" stroke="#dddddd" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{x:.2f}" y="{mt + ph + 16:.2f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{tx:.4g}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        y = mt + ph * (1.0 - (ty - y_lo) / (y_hi - y_lo))
        label = 10.0 ** ty if log_y else ty
        out.append(
            f'<line x1="{ml:.2f}" y1="{y:.2f}" x2="{ml + pw:.2f}" '
            f'y2="{y:.2f}" stroke="#dddddd" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{ml - 6:.2f}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{label:.4g}</text>'
        )
    out.append(
        f'<rect x="{ml:.2f}" y="{mt:.2f}" width="{pw:.2f}" height="{ph:.2f}" '
        f'fill="none" stroke="#444444" stroke-width="1"/>'
    )
    for i, (label, xs, ys) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        ly = mt + 14 + 15 * i
        out.append(
            f'<line x1="{ml + pw - 130:.2f}" y1="{ly - 4:.2f}" '
            f'x2="{ml + pw - 110:.2f}" y2="{ly - 4:.2f}" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        out.append(
            f'<text x="{ml + pw - 105:.2f}" y="{ly:.2f}" '
            f'font-family="sans-serif" font-size="11">{_esc(label)}</text>'
        )
    if xlabel:
        out.append(
            f'<text x="{ml + pw / 2:.2f}" y="{height - 10:.2f}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="12">'
            f'{_esc(xlabel)}</text>'
        )
    if ylabel:
        out.append(
            f'<text x="16" y="{mt + ph / 2:.2f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 16 {mt + ph / 2:.2f})">{_esc(ylabel)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out)


def _esc(s: str) -> str:
    return (
        str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    )


def write_svg_chart(path: str, *args, **kwargs) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg_chart(*args, **kwargs))
        fh.write("\n")
