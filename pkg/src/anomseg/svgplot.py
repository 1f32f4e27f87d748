"""Minimal deterministic SVG charts (no rendering dependencies).

Only what the report command needs: grouped histograms, a scatter with a fit
line, step curves over a grid, a categorical strip plot and a small text
table. Numbers are formatted with fixed precision so identical inputs yield
byte-identical files.
"""

import numpy as np

from . import pgmio

W, H = 640, 420
MARGIN = 56
GREEN = "#2a9d3e"
RED = "#d03030"
BLUE = "#2060c0"
GRAY = "#888888"


def _fmt(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".") if v == v else "nan"


def _svg(elements: list[str]) -> str:
    body = "\n".join(elements)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">\n<rect width="{W}" height="{H}" fill="white"/>\n'
        f"{body}\n</svg>\n"
    )


def _text(x, y, s, size=12, anchor="start", color="#222"):
    return (f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'font-family="sans-serif" text-anchor="{anchor}" fill="{color}">{s}</text>')


class Axes:
    """Linear mapping from data space to the SVG plot box, with tick marks."""

    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0

    def px(self, x):
        return MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2 * MARGIN)

    def py(self, y):
        return H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2 * MARGIN)

    def frame(self, xlabel, ylabel, title):
        el = [
            f'<rect x="{MARGIN}" y="{MARGIN}" width="{W - 2 * MARGIN}" '
            f'height="{H - 2 * MARGIN}" fill="none" stroke="{GRAY}"/>',
            _text(W / 2, H - 14, xlabel, anchor="middle"),
            _text(14, H / 2, ylabel, anchor="middle"),
            _text(W / 2, 24, title, size=14, anchor="middle"),
        ]
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            xv = self.x0 + frac * (self.x1 - self.x0)
            yv = self.y0 + frac * (self.y1 - self.y0)
            el.append(_text(self.px(xv), H - MARGIN + 16, _fmt(xv), size=10, anchor="middle"))
            el.append(_text(MARGIN - 6, self.py(yv) + 4, _fmt(yv), size=10, anchor="end"))
        return el

    def polyline(self, xs, ys, color, dash=None):
        pts = " ".join(f"{_fmt(self.px(x))},{_fmt(self.py(y))}" for x, y in zip(xs, ys))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{extra}/>'

    def dots(self, xs, ys, color, r=3.5):
        return "\n".join(
            f'<circle cx="{_fmt(self.px(x))}" cy="{_fmt(self.py(y))}" r="{r}" '
            f'fill="{color}" fill-opacity="0.75"/>'
            for x, y in zip(xs, ys)
        )


def histogram_svg(path, bin_edges, healthy_hist, diseased_hist, xlabel, title):
    edges = np.asarray(bin_edges, dtype=np.float64)
    hh = np.asarray(healthy_hist)
    dh = np.asarray(diseased_hist)
    top = max(1, int(max(hh.max(initial=0), dh.max(initial=0))))
    ax = Axes((edges[0], edges[-1]), (0, top * 1.15))
    el = ax.frame(xlabel, "volumes", title)
    width = (ax.px(edges[1]) - ax.px(edges[0])) / 2.0 - 1.0
    for i in range(len(edges) - 1):
        x = ax.px(edges[i])
        for j, (count, color) in enumerate(((hh[i], GREEN), (dh[i], RED))):
            if count == 0:
                continue
            y = ax.py(count)
            el.append(
                f'<rect x="{_fmt(x + j * width + 1)}" y="{_fmt(y)}" width="{_fmt(width)}" '
                f'height="{_fmt(ax.py(0) - y)}" fill="{color}" fill-opacity="0.8"/>'
            )
    el.append(_text(W - MARGIN, 40, "healthy", anchor="end", color=GREEN))
    el.append(_text(W - MARGIN, 56, "diseased", anchor="end", color=RED))
    pgmio.write_text(path, _svg(el))


def scatter_fit_svg(path, xs, ys, slope, intercept, rho, xlabel, ylabel, title):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    pad_x = 0.05 * (xs.max() - xs.min() or 1.0)
    pad_y = 0.05 * (ys.max() - ys.min() or 1.0)
    ax = Axes((xs.min() - pad_x, xs.max() + pad_x), (ys.min() - pad_y, ys.max() + pad_y))
    el = ax.frame(xlabel, ylabel, title)
    if slope is not None:
        line_x = np.array([xs.min(), xs.max()])
        el.append(ax.polyline(line_x, slope * line_x + intercept, GRAY, dash="4,3"))
    el.append(ax.dots(xs, ys, BLUE))
    label = f"rho = {_fmt(rho)}" if rho is not None else "rho undefined"
    el.append(_text(W - MARGIN, 40, label, anchor="end"))
    pgmio.write_text(path, _svg(el))


def curves_svg(path, grid, named_curves, xlabel, ylabel, title):
    """named_curves: list of (label, values, color)."""
    ax = Axes((min(grid), max(grid)), (0.0, 1.02))
    el = ax.frame(xlabel, ylabel, title)
    for i, (label, values, color) in enumerate(named_curves):
        vals = np.asarray(values, dtype=np.float64)
        ok = np.isfinite(vals)
        el.append(ax.polyline(np.asarray(grid)[ok], vals[ok], color))
        el.append(_text(W - MARGIN, 40 + 16 * i, label, anchor="end", color=color))
    pgmio.write_text(path, _svg(el))


def strip_svg(path, groups, ylabel, title):
    """Categorical scatter; groups: list of (label, values, color)."""
    all_vals = np.concatenate([np.asarray(v, dtype=np.float64) for _, v, _ in groups])
    pad = 0.05 * (all_vals.max() - all_vals.min() or 1.0)
    ax = Axes((-0.5, len(groups) - 0.5), (all_vals.min() - pad, all_vals.max() + pad))
    el = ax.frame("", ylabel, title)
    for i, (label, values, color) in enumerate(groups):
        values = np.asarray(values, dtype=np.float64)
        jitter = (np.arange(len(values)) % 7 - 3) * 0.03
        el.append(ax.dots(i + jitter, values, color))
        el.append(_text(ax.px(i), H - MARGIN + 30, label, size=11, anchor="middle"))
    pgmio.write_text(path, _svg(el))


def table_svg(path, header, rows, title):
    el = [_text(W / 2, 28, title, size=14, anchor="middle")]
    col_w = (W - 2 * MARGIN) / max(1, len(header))
    for j, name in enumerate(header):
        el.append(_text(MARGIN + j * col_w, 60, str(name), size=12, color="#000"))
    y = 84
    for row in rows:
        for j, cell in enumerate(row):
            s = _fmt(cell) if isinstance(cell, float) else str(cell)
            el.append(_text(MARGIN + j * col_w, y, s, size=11))
        y += 20
    pgmio.write_text(path, _svg(el))
