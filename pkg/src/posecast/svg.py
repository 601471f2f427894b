"""Minimal deterministic SVG rendering: schedule curves, loss traces, and
stick-figure strips. Byte-for-byte reproducible for fixed inputs, which is
why this is hand-rolled string assembly rather than a plotting library."""

from __future__ import annotations

import numpy as np

__all__ = [
    "WIDTH",
    "HEIGHT",
    "MARGIN",
    "PALETTE",
    "map_x",
    "map_y",
    "render",
    "plot_curves",
    "plot_schedule",
    "plot_motion_strip",
]

WIDTH = 640
HEIGHT = 400
MARGIN = 48

PALETTE = ("#4878a8", "#e57a5a", "#5a9e5a", "#8b6bb8", "#d69a2e", "#666666")


def _fmt(v):
    return format(float(v), ".6g")


def map_x(v, lo, hi, width=WIDTH, margin=MARGIN):
    span = hi - lo if hi > lo else 1.0
    return margin + (v - lo) / span * (width - 2 * margin)


def map_y(v, lo, hi, height=HEIGHT, margin=MARGIN):
    span = hi - lo if hi > lo else 1.0
    return height - margin - (v - lo) / span * (height - 2 * margin)


def polyline(points, color, width=1.5):
    pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
    return f'<polyline fill="none" stroke="{color}" stroke-width="{_fmt(width)}" points="{pts}"/>'


def line(x1, y1, x2, y2, color, width=1.0):
    return (
        f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
        f'stroke="{color}" stroke-width="{_fmt(width)}"/>'
    )


def circle(cx, cy, r, color):
    return f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(r)}" fill="{color}"/>'


def text(x, y, content, size=12, color="#222222", anchor="start"):
    return (
        f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{_fmt(size)}" '
        f'font-family="sans-serif" fill="{color}" text-anchor="{anchor}">{content}</text>'
    )


def render(elements, width=WIDTH, height=HEIGHT):
    body = "\n".join(elements)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>\n'
        f"{body}\n</svg>\n"
    )


def plot_curves(series, x_label="", y_label="", y_range=None, x_range=None):
    """series: list of (label, [(x, y), ...]) drawn in palette order."""
    if not series or not any(pts for _, pts in series):
        raise ValueError("nothing to plot")
    xs = [x for _, pts in series for x, _ in pts]
    ys = [y for _, pts in series for _, y in pts]
    x_lo, x_hi = (min(xs), max(xs)) if x_range is None else x_range
    y_lo, y_hi = (min(ys), max(ys)) if y_range is None else y_range
    elements = [
        line(MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, "#222222"),
        line(MARGIN, MARGIN, MARGIN, HEIGHT - MARGIN, "#222222"),
        text(WIDTH / 2, HEIGHT - 12, x_label, anchor="middle"),
        text(14, MARGIN - 10, y_label),
        text(MARGIN, HEIGHT - MARGIN + 16, _fmt(x_lo), size=10, anchor="middle"),
        text(WIDTH - MARGIN, HEIGHT - MARGIN + 16, _fmt(x_hi), size=10, anchor="middle"),
        text(MARGIN - 6, HEIGHT - MARGIN + 4, _fmt(y_lo), size=10, anchor="end"),
        text(MARGIN - 6, MARGIN + 4, _fmt(y_hi), size=10, anchor="end"),
    ]
    for i, (label, pts) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        mapped = [(map_x(x, x_lo, x_hi), map_y(y, y_lo, y_hi)) for x, y in pts]
        elements.append(polyline(mapped, color))
        elements.append(text(WIDTH - MARGIN - 4, MARGIN + 14 * (i + 1), label, color=color, anchor="end"))
    return render(elements)


def plot_schedule(tables):
    """Signal-weight curves alpha_bar(t) on a fixed [0, 1] vertical axis."""
    series = [
        (table.kind, [(t, float(table.alpha_bar[t])) for t in range(table.T + 1)])
        for table in tables
    ]
    t_max = max(table.T for table in tables)
    return plot_curves(
        series, x_label="diffusion step t", y_label="alpha_bar", y_range=(0.0, 1.0),
        x_range=(0.0, float(t_max)),
    )


def _stick(pose, skeleton, cx, cy, scale, color):
    root = skeleton.root
    center = pose[root]
    elems = []
    for j, p in enumerate(skeleton.parents):
        if j == root:
            continue
        x1 = cx + (pose[p][0] - center[0]) * scale
        y1 = cy - (pose[p][2] - center[2]) * scale
        x2 = cx + (pose[j][0] - center[0]) * scale
        y2 = cy - (pose[j][2] - center[2]) * scale
        elems.append(line(x1, y1, x2, y2, color, width=1.6))
    elems.append(circle(cx, cy, 1.6, color))
    return elems


def plot_motion_strip(history, samples, skeleton, gt=None, slices=6, max_rows=5):
    """Rows of stick figures: history (gray) then each sample's future.

    Row 0 shows the groundtruth future when given; every row samples
    `slices` evenly spaced frames from history and future.
    """
    history = np.asarray(history, dtype=np.float64)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 4 or samples.shape[0] < 1:
        raise ValueError("prediction strip needs at least one sample")
    rows = []
    if gt is not None:
        rows.append(("groundtruth", np.asarray(gt, dtype=np.float64), "#222222"))
    for i in range(min(samples.shape[0], max_rows)):
        rows.append((f"sample {i}", samples[i], PALETTE[i % len(PALETTE)]))

    span = history[:, :, (0, 2)]
    extent = max(1e-6, np.max(np.abs(span - span.mean(axis=(0, 1)))))
    cell = 70.0
    scale = 26.0 / extent
    width = int(MARGIN * 2 + 2 * slices * cell)
    height = int(MARGIN + len(rows) * cell + MARGIN)
    elements = []
    for r, (label, future, color) in enumerate(rows):
        cy = MARGIN + (r + 0.5) * cell
        elements.append(text(4, cy + 4, label, size=10, color=color))
        hist_idx = np.linspace(0, history.shape[0] - 1, slices).astype(int)
        for s, fi in enumerate(hist_idx):
            cx = MARGIN + (s + 0.5) * cell
            elements.extend(_stick(history[fi], skeleton, cx, cy, scale, "#aaaaaa"))
        fut_idx = np.linspace(0, future.shape[0] - 1, slices).astype(int)
        for s, fi in enumerate(fut_idx):
            cx = MARGIN + (slices + s + 0.5) * cell
            elements.extend(_stick(future[fi], skeleton, cx, cy, scale, color))
    elements.append(
        line(MARGIN + slices * cell, MARGIN / 2, MARGIN + slices * cell, height - MARGIN / 2,
             "#cccccc", width=1.0)
    )
    return render(elements, width=width, height=height)
