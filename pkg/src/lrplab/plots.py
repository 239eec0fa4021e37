"""Plot-data extraction from result records, with optional SVG rendering.

Plot CSVs are derived from the record's data files so they can be produced
long after the run, without touching any simulation code. The SVG output is
self-contained SVG 1.1 (no external assets) so it can be dropped into a
report directly.
"""

from __future__ import annotations

import csv
import math
import os
from xml.sax.saxutils import escape

from .errors import ConfigurationError
from .records import RecordStore
from .scaling import fit_power_law

PLOT_KINDS = ("lambda", "spectral", "exit", "tails", "goodradius")

_SOURCES = {
    "lambda": ("lambda.csv", "delta / resistance / full-pipeline"),
    "spectral": ("spectral.csv", "spectral / full-pipeline"),
    "exit": ("exit.csv", "exit / full-pipeline"),
    "tails": ("tails.csv", "tails / full-pipeline"),
    "goodradius": ("goodradius.csv", "goodradius / full-pipeline"),
}


def _read_rows(record_dir: str, name: str, commands: str) -> list:
    path = os.path.join(record_dir, name)
    if not os.path.exists(path):
        raise ConfigurationError(
            f"record at {record_dir} has no {name}; "
            f"this plot needs a record produced by: {commands}"
        )
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _betas(rows: list) -> list:
    seen = []
    for row in rows:
        if row["beta"] not in seen:
            seen.append(row["beta"])
    return seen


def _write(path: str, text: str) -> str:
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _fit_line(points, slope=None, intercept=None):
    """Fitted values at the sample x's, refitting when the summary lacks one."""
    if slope is None or intercept is None:
        fit = fit_power_law([(x, y, 0.0) for x, y, _ in points])
        slope, intercept = fit.slope, fit.intercept
    return [math.exp(intercept + slope * math.log(x)) for x, _, _ in points]


def emit_plot_data(record_dir: str, which: str, svg: bool = False) -> list:
    """Write plot CSVs (and optionally SVGs) next to the record; returns paths."""
    if which not in PLOT_KINDS:
        raise ConfigurationError(
            f"unknown plot kind {which!r}; available: {', '.join(PLOT_KINDS)}"
        )
    name, commands = _SOURCES[which]
    rows = _read_rows(record_dir, name, commands)
    summary = RecordStore.load_summary(record_dir)
    per_beta = summary.get("betas", {})
    written = []

    def out(fname, header, data_rows, svg_doc=None):
        text = header + "\n" + "\n".join(data_rows) + "\n"
        written.append(_write(os.path.join(record_dir, fname), text))
        if svg_doc is not None:
            svg_path = os.path.join(record_dir, fname[:-4] + ".svg")
            written.append(_write(svg_path, svg_doc))

    if which == "lambda":
        for b in _betas(rows):
            pts = [
                (int(r["n"]), float(r["lambda_hat"]), float(r["se"]))
                for r in rows
                if r["beta"] == b
            ]
            info = per_beta.get(b, {})
            if "delta" in info:
                info = info["delta"]
            line = _fit_line(pts, info.get("delta_hat"), info.get("intercept"))
            doc = None
            if svg:
                doc = _svg_plot(
                    [(pts, line)], True, True, "n", "Lambda(n)",
                    f"resistance growth, beta={b}",
                )
            out(
                f"plot-lambda-{b}.csv", "n,lambda_hat,se",
                [f"{n},{v:.10g},{s:.10g}" for n, v, s in pts], doc,
            )
    elif which == "spectral":
        for b in _betas(rows):
            pts = [
                (int(r["n"]), float(r["p"]), float(r["se"]))
                for r in rows
                if r["beta"] == b and r["flavor"] == "annealed"
            ]
            info = per_beta.get(b, {})
            if "spectral" in info:
                info = info["spectral"]
            line = _fit_line(
                pts, info.get("annealed_slope"), info.get("annealed_intercept")
            )
            doc = None
            if svg:
                doc = _svg_plot(
                    [(pts, line)], True, True, "n", "p_n(0,0)",
                    f"annealed return probability, beta={b}",
                )
            out(
                f"plot-spectral-{b}.csv", "n,mean_p2n,se,fit_line",
                [
                    f"{n},{v:.10g},{s:.10g},{f:.10g}"
                    for (n, v, s), f in zip(pts, line)
                ],
                doc,
            )
    elif which == "exit":
        for b in _betas(rows):
            pts = [
                (float(r["r"]), float(r["mean_exit"]), float(r["se"]))
                for r in rows
                if r["beta"] == b
            ]
            info = per_beta.get(b, {})
            if "exit" in info:
                info = info["exit"]
            line = _fit_line(pts, info.get("slope"), info.get("intercept"))
            doc = None
            if svg:
                doc = _svg_plot(
                    [(pts, line)], True, True, "r", "mean exit time",
                    f"exit time from resistance balls, beta={b}",
                )
            out(
                f"plot-exit-{b}.csv", "r,mean_exit,se,fit_line",
                [
                    f"{r:.10g},{v:.10g},{s:.10g},{f:.10g}"
                    for (r, v, s), f in zip(pts, line)
                ],
                doc,
            )
    elif which == "tails":
        for b in _betas(rows):
            for tag in ("volume-lower", "volume-upper", "resistance-lower"):
                pts = [
                    (float(r["lambda"]), float(r["prob"]),
                     float(r["ci_low"]), float(r["ci_high"]))
                    for r in rows
                    if r["beta"] == b and r["tag"] == tag
                ]
                if not pts:
                    continue
                doc = None
                if svg:
                    scatter = [(x, p, (hi - lo) / 2) for x, p, lo, hi in pts]
                    doc = _svg_plot(
                        [(scatter, None)], True, False, "lambda", "probability",
                        f"{tag} tail, beta={b}",
                    )
                out(
                    f"plot-tails-{b}-{tag}.csv", "lambda,prob,ci_low,ci_high",
                    [
                        f"{x:.10g},{p:.10g},{lo:.10g},{hi:.10g}"
                        for x, p, lo, hi in pts
                    ],
                    doc,
                )
    elif which == "goodradius":
        for b in _betas(rows):
            pts = [
                (float(r["lambda"]), float(r["frequency"]),
                 float(r["ci_low"]), float(r["ci_high"]))
                for r in rows
                if r["beta"] == b
            ]
            doc = None
            if svg:
                scatter = [(x, p, (hi - lo) / 2) for x, p, lo, hi in pts]
                doc = _svg_plot(
                    [(scatter, None)], True, False, "lambda", "frequency",
                    f"good-radius frequency, beta={b}",
                )
            out(
                f"plot-goodradius-{b}.csv", "lambda,frequency,ci_low,ci_high",
                [
                    f"{x:.10g},{p:.10g},{lo:.10g},{hi:.10g}"
                    for x, p, lo, hi in pts
                ],
                doc,
            )
    return written


# --- SVG rendering ----------------------------------------------------------

_W, _H = 640, 480
_ML, _MR, _MT, _MB = 64, 20, 28, 46


def _scale(values, log: bool):
    vals = [math.log10(v) for v in values if v > 0] if log else list(values)
    if not vals:
        vals = [0.0, 1.0]
    lo, hi = min(vals), max(vals)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _ticks(lo: float, hi: float, log: bool):
    if log:
        start = math.ceil(lo)
        return [(k, f"1e{k}") for k in range(start, math.floor(hi) + 1)] or [
            ((lo + hi) / 2, f"{10 ** ((lo + hi) / 2):.3g}")
        ]
    step = (hi - lo) / 4
    return [(lo + i * step, f"{lo + i * step:.3g}") for i in range(5)]


def _svg_plot(series, xlog: bool, ylog: bool, xlabel: str, ylabel: str,
              title: str) -> str:
    """series: list of (points, fit_values) with points = [(x, y, yerr), ...]."""
    xs = [x for pts, _ in series for x, _, _ in pts]
    ys = [y for pts, _ in series for _, y, _ in pts]
    for pts, line in series:
        if line:
            ys.extend(line)
    x0, x1 = _scale(xs, xlog)
    y0, y1 = _scale(ys, ylog)

    def px(x):
        v = math.log10(max(x, 1e-300)) if xlog else x
        return _ML + (v - x0) / (x1 - x0) * (_W - _ML - _MR)

    def py(y):
        v = math.log10(max(y, 1e-300)) if ylog else y
        return _H - _MB - (v - y0) / (y1 - y0) * (_H - _MT - _MB)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="18" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
        'stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
    ]
    for v, label in _ticks(x0, x1, xlog):
        x = _ML + (v - x0) / (x1 - x0) * (_W - _ML - _MR)
        parts.append(
            f'<line x1="{x:.1f}" y1="{_H - _MB}" x2="{x:.1f}" '
            f'y2="{_H - _MB + 5}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{_H - _MB + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{escape(label)}</text>'
        )
    for v, label in _ticks(y0, y1, ylog):
        y = _H - _MB - (v - y0) / (y1 - y0) * (_H - _MT - _MB)
        parts.append(
            f'<line x1="{_ML - 5}" y1="{y:.1f}" x2="{_ML}" y2="{y:.1f}" '
            'stroke="black"/>'
        )
        parts.append(
            f'<text x="{_ML - 8}" y="{y + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{escape(label)}</text>'
        )
    parts.append(
        f'<text x="{(_ML + _W - _MR) / 2:.1f}" y="{_H - 8}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{escape(xlabel)}</text>'
    )
    parts.append(
        f'<text x="16" y="{(_MT + _H - _MB) / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {(_MT + _H - _MB) / 2:.1f})">'
        f'{escape(ylabel)}</text>'
    )
    colors = ("#1f6fb2", "#c04000", "#2e7d32", "#6a1b9a")
    for si, (pts, line) in enumerate(series):
        color = colors[si % len(colors)]
        if line:
            path = " ".join(
                f"{px(x):.1f},{py(f):.1f}" for (x, _, _), f in zip(pts, line)
            )
            parts.append(
                f'<polyline points="{path}" fill="none" stroke="{color}" '
                'stroke-dasharray="5,3"/>'
            )
        for x, y, err in pts:
            if err and err > 0:
                parts.append(
                    f'<line x1="{px(x):.1f}" y1="{py(max(y - err, 1e-300)):.1f}" '
                    f'x2="{px(x):.1f}" y2="{py(y + err):.1f}" stroke="{color}"/>'
                )
            parts.append(
                f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3" fill="{color}"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
