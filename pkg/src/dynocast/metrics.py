"""Trajectory evaluation: displacement errors and oriented-box IoU."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def ade(pred, truth) -> float:
    """Mean Euclidean xy displacement over the horizon."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape[:-1] != t.shape[:-1]:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    return float(np.linalg.norm(p[..., :2] - t[..., :2], axis=-1).mean())


def fde(pred, truth) -> float:
    """Euclidean xy displacement at the final horizon step."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape[:-1] != t.shape[:-1]:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    return float(np.linalg.norm(p[..., -1, :2] - t[..., -1, :2], axis=-1).mean())


@dataclass(frozen=True)
class OrientedBox:
    """Vehicle footprint rectangle; defaults match a 1/10-scale car."""

    x: float
    y: float
    theta: float
    length: float = 0.58
    width: float = 0.31

    def __post_init__(self):
        if self.length <= 0.0 or self.width <= 0.0:
            raise ValueError("box extents must be positive")

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        hl, hw = 0.5 * self.length, 0.5 * self.width
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.x, self.y])


def _polygon_area(poly: np.ndarray) -> float:
    # Shoelace; counter-clockwise polygons give positive area.
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of ``subject`` by convex ``clip`` (both CCW)."""
    output = [tuple(p) for p in subject]
    m = len(clip)
    for i in range(m):
        if not output:
            break
        a = clip[i]
        b = clip[(i + 1) % m]
        edge = (b[0] - a[0], b[1] - a[1])
        inputs = output
        output = []
        prev = inputs[-1]
        prev_in = edge[0] * (prev[1] - a[1]) - edge[1] * (prev[0] - a[0]) >= 0.0
        for cur in inputs:
            cur_in = edge[0] * (cur[1] - a[1]) - edge[1] * (cur[0] - a[0]) >= 0.0
            if cur_in != prev_in:
                # Intersection of segment prev->cur with the clip edge line.
                dx, dy = cur[0] - prev[0], cur[1] - prev[1]
                denom = edge[0] * dy - edge[1] * dx
                if denom != 0.0:
                    t = (edge[0] * (a[1] - prev[1]) - edge[1] * (a[0] - prev[0])) / denom
                    output.append((prev[0] + t * dx, prev[1] + t * dy))
            if cur_in:
                output.append(cur)
            prev, prev_in = cur, cur_in
    return np.array(output) if output else np.empty((0, 2))


def oriented_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Intersection area over union area of two oriented rectangles."""
    pa, pb = a.corners(), b.corners()
    area_a, area_b = abs(_polygon_area(pa)), abs(_polygon_area(pb))
    if area_a <= 0.0 or area_b <= 0.0:
        raise ValueError("degenerate zero-area box")
    inter_poly = _clip_polygon(pa, pb)
    inter = abs(_polygon_area(inter_poly)) if len(inter_poly) >= 3 else 0.0
    union = area_a + area_b - inter
    return float(min(max(inter / union, 0.0), 1.0))


def trajectory_iou(pred, truth, length: float = 0.58, width: float = 0.31) -> float:
    """Mean oriented-box IoU over horizon steps (boxes from x, y, theta)."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    vals = [
        oriented_iou(
            OrientedBox(p[k, 0], p[k, 1], p[k, 2], length, width),
            OrientedBox(t[k, 0], t[k, 1], t[k, 2], length, width),
        )
        for k in range(p.shape[0])
    ]
    return float(np.mean(vals))


@dataclass
class MetricReport:
    """Aggregate evaluation over a set of samples."""

    ade: float
    fde: float
    iou: float
    per_sample: np.ndarray  # (N, 3) columns ade, fde, iou

    def to_dict(self) -> dict:
        return {"ade": self.ade, "fde": self.fde, "iou": self.iou, "n": int(len(self.per_sample))}


def evaluate_trajectories(preds, truths, length: float = 0.58, width: float = 0.31,
                          with_iou: bool = True) -> MetricReport:
    """Per-sample ADE/FDE/IoU plus means; ``preds``/``truths`` are (N, n, >=3)."""
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if preds.shape != truths.shape:
        raise ValueError(f"shape mismatch: {preds.shape} vs {truths.shape}")
    rows = []
    for p, t in zip(preds, truths):
        row_iou = trajectory_iou(p[:, :3], t[:, :3], length, width) if with_iou else math.nan
        rows.append((ade(p, t), fde(p, t), row_iou))
    per_sample = np.array(rows)
    return MetricReport(
        ade=float(per_sample[:, 0].mean()),
        fde=float(per_sample[:, 1].mean()),
        iou=float(per_sample[:, 2].mean()) if with_iou else math.nan,
        per_sample=per_sample,
    )


def pearson_r(x, y) -> float:
    """Pearson correlation coefficient of two equal-length vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("pearson_r needs two equal-length 1-D vectors (n >= 2)")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(np.dot(xc, xc)) * float(np.dot(yc, yc)))
    if denom == 0.0:
        raise ValueError("zero variance input")
    return float(np.dot(xc, yc) / denom)
