"""Minimal native SVG emission: polylines, polygons, circles, text.

Only structural validity matters here (the files parse as XML and draw the
intended geometry); this deliberately avoids a plotting dependency.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np


class SvgCanvas:
    """Fixed-size canvas with a world-to-pixel transform fitted to the data."""

    def __init__(self, width: int = 800, height: int = 600, margin: int = 30):
        self.width = width
        self.height = height
        self.margin = margin
        self._elements: list = []
        self._scale = 1.0
        self._offset = (0.0, 0.0)
        self._flip_y = True

    def fit(self, points, flip_y: bool = True, equal_aspect: bool = True) -> None:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        xmin, ymin = p.min(axis=0)
        xmax, ymax = p.max(axis=0)
        span_x = max(xmax - xmin, 1e-9)
        span_y = max(ymax - ymin, 1e-9)
        usable_w = self.width - 2 * self.margin
        usable_h = self.height - 2 * self.margin
        if equal_aspect:
            self._scale = min(usable_w / span_x, usable_h / span_y)
            sx = sy = self._scale
        else:
            sx, sy = usable_w / span_x, usable_h / span_y
            self._scale = (sx, sy)
        self._flip_y = flip_y
        self._sx, self._sy = sx, sy
        self._offset = (xmin, ymin if not flip_y else ymax)

    def _tx(self, pts) -> np.ndarray:
        p = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        x = self.margin + (p[:, 0] - self._offset[0]) * self._sx
        if self._flip_y:
            y = self.margin + (self._offset[1] - p[:, 1]) * self._sy
        else:
            y = self.margin + (p[:, 1] - self._offset[1]) * self._sy
        return np.stack([x, y], axis=1)

    @staticmethod
    def _fmt(points) -> str:
        return " ".join(f"{x:.2f},{y:.2f}" for x, y in points)

    def polyline(self, points, stroke: str = "#333", width: float = 1.5,
                 opacity: float = 1.0, dashed: bool = False) -> None:
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        self._elements.append(
            f'<polyline points="{self._fmt(self._tx(points))}" fill="none" '
            f'stroke="{stroke}" stroke-width="{width}" stroke-opacity="{opacity}"{dash}/>'
        )

    def polygon(self, points, fill: str = "#88aaff", stroke: str = "none",
                opacity: float = 0.35) -> None:
        self._elements.append(
            f'<polygon points="{self._fmt(self._tx(points))}" fill="{fill}" '
            f'fill-opacity="{opacity}" stroke="{stroke}"/>'
        )

    def circle(self, center, radius_px: float = 3.0, fill: str = "#c33") -> None:
        (x, y), = self._tx([center])
        self._elements.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{radius_px}" fill="{fill}"/>')

    def text(self, pixel_xy, content: str, size: int = 13, fill: str = "#222") -> None:
        x, y = pixel_xy
        self._elements.append(
            f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" '
            f'font-family="sans-serif" fill="{fill}">{escape(content)}</text>'
        )

    def save(self, path) -> None:
        body = "\n".join(self._elements)
        Path(path).write_text(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
            f'<rect width="{self.width}" height="{self.height}" fill="white"/>\n'
            f"{body}\n</svg>\n"
        )


HEAD_COLORS = {"physics": "#d62728", "physics_curriculum": "#9467bd",
               "lstm": "#1f77b4", "ctrv": "#2ca02c", "truth": "#111111"}


def plot_track(canvas: SvgCanvas, track) -> None:
    from .simkit import _left_normals

    normals = _left_normals(track.points)
    left = track.points + track.w_left[:, None] * normals
    right = track.points - track.w_right[:, None] * normals
    canvas.polyline(np.vstack([left, left[:1]]), stroke="#999", width=1.0)
    canvas.polyline(np.vstack([right, right[:1]]), stroke="#999", width=1.0)
    canvas.polyline(np.vstack([track.points, track.points[:1]]),
                    stroke="#cccccc", width=1.0, dashed=True)


def plot_trajectories(path, track, truth, preds_by_head: dict, obs=None) -> None:
    """Track plus ground truth and per-head predicted trajectories."""
    canvas = SvgCanvas()
    pts = [track.points]
    canvas.fit(np.vstack(pts))
    plot_track(canvas, track)
    canvas.polyline(truth[:, :2], stroke=HEAD_COLORS["truth"], width=2.0)
    y = 18
    canvas.text((canvas.margin, y), "truth", fill=HEAD_COLORS["truth"])
    for name, states in preds_by_head.items():
        color = HEAD_COLORS.get(name, "#e377c2")
        canvas.polyline(states[:, :2], stroke=color, width=2.0)
        y += 16
        canvas.text((canvas.margin, y), name, fill=color)
    if obs is not None:
        for p in obs:
            canvas.circle(p[:2], 2.0, fill="#555")
    canvas.save(path)


def plot_regions(path, track, pred, polygons, truth=None) -> None:
    canvas = SvgCanvas()
    canvas.fit(np.vstack([track.points] + [np.asarray(p) for p in polygons]))
    plot_track(canvas, track)
    for poly in polygons:
        canvas.polygon(poly, fill="#6baed6", opacity=0.25)
    canvas.polyline(np.asarray(pred)[:, :2], stroke="#d62728", width=2.0)
    if truth is not None:
        canvas.polyline(np.asarray(truth)[:, :2], stroke="#111", width=1.5, dashed=True)
    canvas.save(path)


def plot_curves(path, series: dict, title: str = "", log_y: bool = False) -> None:
    """Simple line chart; ``series`` maps label -> 1-D array."""
    canvas = SvgCanvas()
    pts = []
    for values in series.values():
        v = np.asarray(values, dtype=np.float64)
        v = np.log10(np.maximum(v, 1e-12)) if log_y else v
        pts.append(np.stack([np.arange(len(v)), v], axis=1))
    canvas.fit(np.vstack(pts), equal_aspect=False)
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    y = 18
    for (label, values), color in zip(series.items(), palette * 3):
        v = np.asarray(values, dtype=np.float64)
        v = np.log10(np.maximum(v, 1e-12)) if log_y else v
        canvas.polyline(np.stack([np.arange(len(v)), v], axis=1), stroke=color, width=1.6)
        canvas.text((canvas.margin, y), label, fill=color)
        y += 16
    if title:
        canvas.text((canvas.width / 2 - 60, 16), title)
    canvas.save(path)
