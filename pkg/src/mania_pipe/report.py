"""Report rendering: aligned text table, SVG bar chart, SVG confusion heatmaps, rows.json.

SVG is written by hand so that identical inputs give identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import InvalidConfig, IoError
from .metrics import CLASS_NAMES
from .registry import REGISTRY, ReferenceRegistry

CHART_W, CHART_H = 760, 380
PLOT_X0, PLOT_Y0 = 60, 30
PLOT_W, PLOT_H = 670, 280
CELL = 70


def _f(v: float) -> str:
    return f"{v:.2f}"


def _fmt_uar(v) -> str:
    return "-" if v is None else f"{v:.3f}"


def render_table(rows: list[dict]) -> str:
    header = ("condition", "train tasks", "UAR same", "UAR whole", "ref same", "ref whole", "best ep")
    body = [(
        r["condition"],
        ",".join(str(t) for t in r["train_tasks"]),
        _fmt_uar(r["uar_same"]),
        _fmt_uar(r["uar_whole"]),
        _fmt_uar(r.get("reference_same")),
        _fmt_uar(r.get("reference_whole")),
        str(r.get("best_epoch", "")),
    ) for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.ljust(w) for c, w in zip(b, widths)).rstrip() for b in body]
    return "\n".join(lines) + "\n"


def bar_chart_svg(rows: list[dict], registry: ReferenceRegistry = REGISTRY) -> str:
    """Grouped bars (same-task and whole-recording UAR) on a 0..1 axis, references as dashes."""
    n = len(rows)
    slot = PLOT_W / n
    bar_w = slot * 0.35
    base = PLOT_Y0 + PLOT_H
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{CHART_W}" height="{CHART_H}" '
        f'viewBox="0 0 {CHART_W} {CHART_H}">',
        f'<rect x="0" y="0" width="{CHART_W}" height="{CHART_H}" fill="white"/>',
        f'<g id="axis" data-y0="{PLOT_Y0}" data-height="{PLOT_H}">',
        f'<line x1="{PLOT_X0}" y1="{base}" x2="{PLOT_X0 + PLOT_W}" y2="{base}" stroke="black"/>',
        f'<line x1="{PLOT_X0}" y1="{PLOT_Y0}" x2="{PLOT_X0}" y2="{base}" stroke="black"/>',
    ]
    for tick in np.linspace(0.0, 1.0, 6):
        y = base - tick * PLOT_H
        out.append(f'<line x1="{PLOT_X0 - 4}" y1="{_f(y)}" x2="{PLOT_X0}" y2="{_f(y)}" stroke="black"/>')
        out.append(f'<text x="{PLOT_X0 - 8}" y="{_f(y + 4)}" font-size="11" text-anchor="end">{tick:.1f}</text>')
    chance = base - PLOT_H / 3.0
    out.append(f'<line class="chance" x1="{PLOT_X0}" y1="{_f(chance)}" x2="{PLOT_X0 + PLOT_W}" '
               f'y2="{_f(chance)}" stroke="#999" stroke-dasharray="2,3"/>')
    out.append("</g>")
    for i, r in enumerate(rows):
        x = PLOT_X0 + i * slot + slot * 0.15
        for j, (key, colour) in enumerate((("same", "#4c72b0"), ("whole", "#dd8452"))):
            v = r.get(f"uar_{key}")
            if v is None:
                continue
            h = v * PLOT_H
            bx = x + j * bar_w
            out.append(f'<rect class="bar {key}" data-condition="{escape(r["condition"])}" '
                       f'data-uar="{v:.6f}" x="{_f(bx)}" y="{_f(base - h)}" width="{_f(bar_w)}" '
                       f'height="{_f(h)}" fill="{colour}"/>')
            ref = registry.reference_for(r["condition"], key)
            if ref is not None:
                ry = base - ref * PLOT_H
                out.append(f'<line class="reference {key}" data-uar="{ref:.3f}" x1="{_f(bx - 2)}" '
                           f'y1="{_f(ry)}" x2="{_f(bx + bar_w + 2)}" y2="{_f(ry)}" stroke="black" '
                           f'stroke-width="2" stroke-dasharray="4,2"/>')
        out.append(f'<text x="{_f(x + bar_w)}" y="{base + 16}" font-size="11" '
                   f'text-anchor="middle">{escape(r["condition"])}</text>')
    ly = CHART_H - 22
    out.append(f'<rect x="{PLOT_X0}" y="{ly}" width="12" height="12" fill="#4c72b0"/>')
    out.append(f'<text x="{PLOT_X0 + 16}" y="{ly + 10}" font-size="11">same tasks</text>')
    out.append(f'<rect x="{PLOT_X0 + 110}" y="{ly}" width="12" height="12" fill="#dd8452"/>')
    out.append(f'<text x="{PLOT_X0 + 126}" y="{ly + 10}" font-size="11">whole recording</text>')
    out.append(f'<text x="{PLOT_X0 + 260}" y="{ly + 10}" font-size="11">dashes: published reference</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def heatmap_svg(counts, title: str = "") -> str:
    """Row-normalized confusion heatmap; cell darkness is the per-class recall share."""
    c = np.asarray(counts, dtype=np.int64)
    k = c.shape[0]
    rows = c.sum(axis=1, keepdims=True)
    frac = np.where(rows > 0, c / np.where(rows > 0, rows, 1), 0.0)
    x0, y0 = 110, 40
    w = x0 + k * CELL + 20
    h = y0 + k * CELL + 50
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
        f'<text x="{x0}" y="20" font-size="13">{escape(title)}</text>',
    ]
    for i in range(k):
        name = CLASS_NAMES[i] if i < len(CLASS_NAMES) else str(i)
        out.append(f'<text x="{x0 - 6}" y="{y0 + i * CELL + CELL // 2 + 4}" font-size="11" '
                   f'text-anchor="end">{name}</text>')
        out.append(f'<text x="{x0 + i * CELL + CELL // 2}" y="{y0 + k * CELL + 16}" font-size="11" '
                   f'text-anchor="middle">{name}</text>')
        for j in range(k):
            shade = int(round(255 * (1.0 - frac[i, j])))
            fill = f"rgb({shade},{shade},255)"
            text_col = "white" if frac[i, j] > 0.5 else "black"
            out.append(f'<rect class="cell" data-row="{i}" data-col="{j}" data-count="{c[i, j]}" '
                       f'x="{x0 + j * CELL}" y="{y0 + i * CELL}" width="{CELL}" height="{CELL}" '
                       f'fill="{fill}" stroke="#333"/>')
            out.append(f'<text x="{x0 + j * CELL + CELL // 2}" y="{y0 + i * CELL + CELL // 2 + 4}" '
                       f'font-size="13" text-anchor="middle" fill="{text_col}">{c[i, j]}</text>')
    out.append(f'<text x="{x0 + k * CELL // 2}" y="{h - 8}" font-size="11" text-anchor="middle">'
               f'predicted (rows: true class)</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def rows_json(rows: list[dict]) -> str:
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"


def render_report(rows: list[dict], registry: ReferenceRegistry = REGISTRY, out_dir=".") -> list[Path]:
    """Write report.txt, uar_by_task.svg, cm_<condition>_<same|whole>.svg and rows.json."""
    if not rows:
        raise InvalidConfig("report needs at least one row")
    out_dir = Path(out_dir)
    files = {
        "report.txt": render_table(rows),
        "uar_by_task.svg": bar_chart_svg(rows, registry),
        "rows.json": rows_json(rows),
    }
    for r in rows:
        for key in ("same", "whole"):
            cm = r.get(f"cm_{key}")
            if cm is not None:
                files[f"cm_{r['condition']}_{key}.svg"] = heatmap_svg(
                    cm, f"tasks {r['condition']}, dev ({key}): UAR {_fmt_uar(r.get(f'uar_{key}'))}")
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            p = out_dir / name
            p.write_text(text)
            written.append(p)
    except OSError as exc:
        raise IoError(f"cannot write report into {out_dir}: {exc}") from exc
    return written
