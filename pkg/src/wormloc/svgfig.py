"""Minimal deterministic SVG emission for figures.

Figures are written as plain SVG text (images embedded as base64 PNG
data URIs) so that identical inputs always produce byte-identical files;
no plotting library is involved.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image

from .errors import InputOutputError


def _f(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return s if s != "-0" else "0"


def png_data_uri(img: np.ndarray) -> str:
    """Encode a [0, 1] grayscale array as a base64 PNG data URI."""
    q = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(q, mode="L").save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


class SvgCanvas:
    """Element accumulator with user coordinates scaled up for display."""

    def __init__(self, width: float, height: float, scale: float = 1.0):
        self.width = width
        self.height = height
        self.scale = scale
        self.parts: list[str] = []

    def image(self, img: np.ndarray, x=0.0, y=0.0, w=None, h=None):
        w = img.shape[1] if w is None else w
        h = img.shape[0] if h is None else h
        self.parts.append(
            f'<image x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" '
            f'preserveAspectRatio="none" image-rendering="pixelated" '
            f'href="{png_data_uri(img)}"/>')

    def rect(self, x, y, w, h, fill="none", stroke="none", opacity=1.0, stroke_width=1.0):
        self.parts.append(
            f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" '
            f'fill="{fill}" stroke="{stroke}" stroke-width="{_f(stroke_width)}" '
            f'opacity="{_f(opacity)}"/>')

    def circle(self, cx, cy, r, fill, stroke="none", stroke_width=0.5):
        self.parts.append(
            f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(r)}" fill="{fill}" '
            f'stroke="{stroke}" stroke-width="{_f(stroke_width)}"/>')

    def polyline(self, xs, ys, stroke, width=1.0, opacity=1.0, dash=None):
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in zip(xs, ys))
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="{_f(width)}" opacity="{_f(opacity)}"{dash_attr}/>')

    def line(self, x1, y1, x2, y2, stroke, width=1.0):
        self.parts.append(
            f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
            f'stroke="{stroke}" stroke-width="{_f(width)}"/>')

    def text(self, x, y, s, size=4.0, fill="black", anchor="start"):
        self.parts.append(
            f'<text x="{_f(x)}" y="{_f(y)}" font-size="{_f(size)}" '
            f'font-family="monospace" fill="{fill}" text-anchor="{anchor}">{s}</text>')

    def render(self) -> str:
        w, h = self.width * self.scale, self.height * self.scale
        header = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(w)}" '
                  f'height="{_f(h)}" viewBox="0 0 {_f(self.width)} {_f(self.height)}">')
        return header + "\n" + "\n".join(self.parts) + "\n</svg>\n"

    def write(self, path) -> None:
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(self.render())
        except OSError as e:
            raise InputOutputError(f"cannot write figure {path}: {e}") from e


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + i * (hi - lo) / (n - 1) for i in range(n)]


class LinePlot:
    """A single set of axes with labeled line series."""

    def __init__(self, title: str, xlabel: str, ylabel: str):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.series: list[tuple[str, list, list, str, float, float]] = []

    def add(self, label: str, xs, ys, color: str, width=1.2, opacity=1.0):
        xs = [float(v) for v in xs]
        ys = [float(v) for v in ys]
        if xs:
            self.series.append((label, xs, ys, color, width, opacity))

    def draw(self, canvas: SvgCanvas, x0, y0, w, h):
        all_x = [v for _, xs, _, _, _, _ in self.series for v in xs]
        all_y = [v for _, _, ys, _, _, _ in self.series for v in ys]
        if not all_x:
            canvas.text(x0 + w / 2, y0 + h / 2, "(no data)", size=5, anchor="middle")
            return
        xlo, xhi = min(all_x), max(all_x)
        ylo, yhi = min(all_y), max(all_y)
        if xhi == xlo:
            xhi = xlo + 1.0
        if yhi == ylo:
            yhi = ylo + 1.0
        pad = 0.05 * (yhi - ylo)
        ylo, yhi = ylo - pad, yhi + pad
        ml, mr, mt, mb = 34, 8, 14, 22  # margins
        px, py, pw, ph = x0 + ml, y0 + mt, w - ml - mr, h - mt - mb

        def sx(v):
            return px + (v - xlo) / (xhi - xlo) * pw

        def sy(v):
            return py + ph - (v - ylo) / (yhi - ylo) * ph

        canvas.rect(px, py, pw, ph, fill="white", stroke="#444444", stroke_width=0.6)
        for tv in _ticks(xlo, xhi):
            canvas.line(sx(tv), py + ph, sx(tv), py + ph + 2, "#444444", 0.6)
            canvas.text(sx(tv), py + ph + 8, f"{tv:.4g}", size=4.5, anchor="middle")
        for tv in _ticks(ylo, yhi):
            canvas.line(px - 2, sy(tv), px, sy(tv), "#444444", 0.6)
            canvas.text(px - 4, sy(tv) + 1.5, f"{tv:.4g}", size=4.5, anchor="end")
            canvas.line(px, sy(tv), px + pw, sy(tv), "#dddddd", 0.4)
        for label, xs, ys, color, width, opacity in self.series:
            canvas.polyline([sx(v) for v in xs], [sy(v) for v in ys], color,
                            width=width, opacity=opacity)
        canvas.text(px + pw / 2, y0 + 9, self.title, size=6, anchor="middle")
        canvas.text(px + pw / 2, y0 + h - 4, self.xlabel, size=5, anchor="middle")
        legend_y = py + 7
        for label, _, _, color, _, _ in self.series:
            if not label:
                continue
            canvas.line(px + pw - 46, legend_y - 1.8, px + pw - 38, legend_y - 1.8, color, 1.4)
            canvas.text(px + pw - 36, legend_y, label, size=4.5)
            legend_y += 7
