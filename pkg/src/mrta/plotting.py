"""Dependency-free SVG line plots for reward curves, trajectories and
priority traces. Output bytes depend only on the input rows."""

from __future__ import annotations

import csv
from collections import defaultdict
from xml.sax.saxutils import escape

PLOT_KINDS = {
    "reward-curves": ("episode", "R1", "R2"),
    "trajectories": ("step", "entity_kind", "entity_id", "x", "y"),
    "priorities": ("step", "robot", "object", "phi"),
}

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")

W, H = 360, 260
ML, MR, MT, MB = 50, 12, 28, 36


class SchemaError(ValueError):
    pass


def read_rows(path, kind):
    if kind not in PLOT_KINDS:
        raise SchemaError(f"unknown plot kind {kind!r}; choose from {', '.join(PLOT_KINDS)}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in PLOT_KINDS[kind] if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)} for {kind} plot")
        return list(reader)


def _fmt(v):
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _panel(title, series, xlabel, ylabel, x0=0):
    """One axes box; ``series`` maps label -> [(x, y), ...]."""
    pts = [p for s in series.values() for p in s]
    if pts:
        xs, ys = [p[0] for p in pts], [p[1] for p in pts]
        xlo, xhi, ylo, yhi = min(xs), max(xs), min(ys), max(ys)
    else:
        xlo, xhi, ylo, yhi = 0.0, 1.0, 0.0, 1.0
    if xhi == xlo:
        xhi = xlo + 1.0
    if yhi == ylo:
        yhi = ylo + 1.0
    pw, ph = W - ML - MR, H - MT - MB

    def sx(x):
        return x0 + ML + (x - xlo) / (xhi - xlo) * pw

    def sy(y):
        return MT + ph - (y - ylo) / (yhi - ylo) * ph

    out = [f'<text x="{x0 + W / 2:.1f}" y="16" text-anchor="middle" font-size="12">{escape(title)}</text>',
           f'<rect x="{x0 + ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>']
    for frac in (0.0, 0.5, 1.0):
        xv, yv = xlo + frac * (xhi - xlo), ylo + frac * (yhi - ylo)
        out.append(f'<text x="{sx(xv):.1f}" y="{MT + ph + 14}" text-anchor="middle" '
                   f'font-size="9">{_fmt(xv)}</text>')
        out.append(f'<text x="{x0 + ML - 4}" y="{sy(yv) + 3:.1f}" text-anchor="end" '
                   f'font-size="9">{_fmt(yv)}</text>')
    out.append(f'<text x="{x0 + ML + pw / 2:.1f}" y="{H - 6}" text-anchor="middle" '
               f'font-size="10">{escape(xlabel)}</text>')
    out.append(f'<text x="{x0 + 12}" y="{MT + ph / 2:.1f}" font-size="10" '
               f'transform="rotate(-90 {x0 + 12} {MT + ph / 2:.1f})" text-anchor="middle">'
               f'{escape(ylabel)}</text>')
    for n, (label, s) in enumerate(series.items()):
        color = PALETTE[n % len(PALETTE)]
        if s:
            path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in s)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{path}"/>')
        ly = MT + 12 + 11 * n
        out.append(f'<text x="{x0 + ML + pw - 4}" y="{ly}" text-anchor="end" font-size="9" '
                   f'fill="{color}">{escape(label)}</text>')
    return out


def _document(panels):
    width = W * len(panels)
    body = []
    for k, p in enumerate(panels):
        body += _panel(*p, x0=W * k)
    return ('<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{H}" '
            f'viewBox="0 0 {width} {H}" font-family="sans-serif">\n'
            '<rect width="100%" height="100%" fill="#fff"/>\n'
            + "\n".join(body) + "\n</svg>\n")


def render(kind, rows):
    if kind == "reward-curves":
        r1 = [(float(r["episode"]), float(r["R1"])) for r in rows]
        r2 = [(float(r["episode"]), float(r["R2"])) for r in rows]
        return _document([("First term (R1)", {"R1": r1}, "episode", "cumulative reward"),
                          ("Second term (R2)", {"R2": r2}, "episode", "cumulative reward")])
    if kind == "trajectories":
        series = defaultdict(list)
        for r in rows:
            series[f'{r["entity_kind"]} {r["entity_id"]}'].append((float(r["x"]), float(r["y"])))
        return _document([("Trajectories", dict(sorted(series.items())), "x [m]", "y [m]")])
    if kind == "priorities":
        by_robot = defaultdict(lambda: defaultdict(list))
        for r in rows:
            by_robot[int(r["robot"])][f'object {r["object"]}'].append(
                (float(r["step"]), float(r["phi"])))
        panels = [(f"Robot {i} priorities", dict(sorted(s.items())), "step", "priority")
                  for i, s in sorted(by_robot.items())]
        return _document(panels or [("Priorities", {}, "step", "priority")])
    raise SchemaError(f"unknown plot kind {kind!r}")


def plot_csv(input_csv, kind, out_svg):
    rows = read_rows(input_csv, kind)
    svg = render(kind, rows)
    with open(out_svg, "w", newline="\n") as fh:
        fh.write(svg)
    return out_svg
