"""Dependency-free SVG output: AUROC curves and stacked 12-lead traces."""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .ecg.record import LEADS_12, EcgRecord
from .errors import ContractError
from .evalbench.experiment import MetricsReport

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _num(x: float) -> str:
    return f"{x:.2f}"


def curve_points(report: MetricsReport) -> "OrderedDict[str, list[tuple[float, float]]]":
    """Mean AUROC over seeds and classes per (protocol, numeric proportion)."""
    acc: dict[str, dict[float, list[float]]] = OrderedDict()
    for r in report.rows:
        try:
            p = float(r.proportion)
        except ValueError:
            continue  # summary rows such as "avg"
        acc.setdefault(r.protocol, {}).setdefault(p, []).append(r.auroc)
    return OrderedDict((proto, [(p, float(np.mean(v))) for p, v in sorted(pts.items())])
                       for proto, pts in acc.items())


def plot_curves(report: MetricsReport | list[MetricsReport], width: int = 640, height: int = 400) -> str:
    reports = report if isinstance(report, list) else [report]
    class_sets = {frozenset(r.class_name for r in rep.rows) for rep in reports}
    if len(class_sets) > 1:
        raise ContractError(f"reports use different class vocabularies: {sorted(sorted(s) for s in class_sets)}")
    merged = MetricsReport([row for rep in reports for row in rep.rows]) if len(reports) > 1 else reports[0]
    curves = curve_points(merged)
    if not curves:
        raise ContractError("report has no numeric proportion rows to plot")
    xs = [p for pts in curves.values() for p, _ in pts]
    ys = [a for pts in curves.values() for _, a in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.05, y1 + 0.05
    left, right, top, bottom = 60, 20, 20, 50
    pw, ph = width - left - right, height - top - bottom

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
           f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="13">proportion n</text>',
           f'<text x="15" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="13" '
           f'transform="rotate(-90 15 {top + ph / 2:.1f})">AUROC</text>']
    for v in np.linspace(x0, x1, 5):
        out.append(f'<text x="{_num(sx(v))}" y="{top + ph + 16}" text-anchor="middle" font-size="10">{v:.2f}</text>')
    for v in np.linspace(y0, y1, 5):
        out.append(f'<text x="{left - 6}" y="{_num(sy(v) + 3)}" text-anchor="end" font-size="10">{v:.3f}</text>')
    for i, (proto, pts) in enumerate(curves.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_num(sx(p))},{_num(sy(a))}" for p, a in pts)
        out.append(f'<polyline data-protocol="{proto}" fill="none" stroke="{color}" stroke-width="2" '
                   f'points="{coords}"/>')
        for p, a in pts:
            out.append(f'<circle cx="{_num(sx(p))}" cy="{_num(sy(a))}" r="3" fill="{color}"/>')
        out.append(f'<text x="{left + pw - 4}" y="{top + 14 + 14 * i}" text-anchor="end" font-size="11" '
                   f'fill="{color}">{proto}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_record(rec: EcgRecord, width: int = 900, row_height: int = 60) -> str:
    """Twelve stacked lead traces sharing one amplitude scale."""
    if rec.n_leads != 12:
        raise ContractError(f"waveform plot needs a 12-lead record, got {rec.n_leads} leads")
    arr = rec.to_array(LEADS_12)
    span = float(np.abs(arr).max()) or 1.0
    left = 50
    height = row_height * 12 + 20
    t = np.linspace(left, width - 10, rec.length) if rec.length > 1 else np.array([left])
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">', '<rect width="100%" height="100%" fill="white"/>']
    for i, name in enumerate(LEADS_12):
        mid = 10 + row_height * (i + 0.5)
        y = mid - arr[i] / span * (row_height * 0.45)
        coords = " ".join(f"{_num(a)},{_num(b)}" for a, b in zip(t, y))
        out.append(f'<text x="8" y="{_num(mid + 4)}" font-size="12">{name}</text>')
        out.append(f'<polyline data-lead="{name}" fill="none" stroke="black" stroke-width="1" points="{coords}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
