"""Closed-track geometry: centerline polylines, arclength, curvature, Frenet.

A track is a closed centerline polyline with per-point corridor widths. The
Frenet frame maps a world point to (s, d): normalized arclength progress of
its closest centerline projection in [0, 1), and signed lateral offset
(left of the travel direction positive).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

_PROJECT_CHUNK = 4096


def polyline_curvature(points: np.ndarray, closed: bool = True) -> np.ndarray:
    """Signed Menger curvature at each vertex (left turns positive)."""
    p = np.asarray(points, dtype=np.float64)
    prv = np.roll(p, 1, axis=0)
    nxt = np.roll(p, -1, axis=0)
    a = p - prv
    b = nxt - p
    chord = nxt - prv
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    denom = (
        np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1) * np.linalg.norm(chord, axis=1)
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = 2.0 * cross / denom
    kappa = np.nan_to_num(kappa, nan=0.0, posinf=0.0, neginf=0.0)
    if not closed:
        kappa[0] = kappa[1]
        kappa[-1] = kappa[-2]
    return kappa


@dataclass
class Track:
    """Closed centerline with widths; derived arclength/tangent tables."""

    points: np.ndarray          # (M, 2), closed implicitly (last -> first)
    w_left: np.ndarray          # (M,)
    w_right: np.ndarray         # (M,)
    curvature: np.ndarray = field(default=None)  # (M,) signed, per point

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 2 or len(self.points) < 3:
            raise DataError("a track needs an (M, 2) centerline with M >= 3")
        self.w_left = np.asarray(self.w_left, dtype=np.float64)
        self.w_right = np.asarray(self.w_right, dtype=np.float64)
        if self.w_left.shape != (len(self.points),) or self.w_right.shape != (len(self.points),):
            raise DataError("widths must be per centerline point")
        if np.hypot(*(self.points[0] - self.points[-1])) < 1e-9:
            raise DataError("do not duplicate the closing point; the track closes implicitly")
        if self.curvature is None:
            self.curvature = polyline_curvature(self.points)
        else:
            self.curvature = np.asarray(self.curvature, dtype=np.float64)
        segs = np.roll(self.points, -1, axis=0) - self.points
        self._seg_len = np.linalg.norm(segs, axis=1)
        if self._seg_len.min() <= 0.0:
            raise DataError("degenerate (zero-length) centerline segment")
        self._seg_dir = segs / self._seg_len[:, None]
        self._cum_s = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self.total_length = float(self._cum_s[-1])

    # -- arclength helpers ---------------------------------------------------

    def arclength_at_index(self, i: int) -> float:
        return float(self._cum_s[i])

    def _locate(self, s_m: np.ndarray) -> tuple:
        """Segment index and offset along it for arclength positions (meters)."""
        s_m = np.mod(s_m, self.total_length)
        idx = np.searchsorted(self._cum_s, s_m, side="right") - 1
        idx = np.clip(idx, 0, len(self.points) - 1)
        return idx, s_m - self._cum_s[idx]

    def point_at(self, s: np.ndarray) -> np.ndarray:
        """Centerline point at normalized progress s (wraps modulo 1)."""
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        idx, along = self._locate(s * self.total_length)
        return self.points[idx] + along[:, None] * self._seg_dir[idx]

    def tangent_at(self, s: np.ndarray) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        idx, _ = self._locate(s * self.total_length)
        return self._seg_dir[idx]

    def curvature_at(self, s: np.ndarray) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        idx, _ = self._locate(s * self.total_length)
        return self.curvature[idx]

    def width_at(self, s: np.ndarray) -> tuple:
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        idx, _ = self._locate(s * self.total_length)
        return self.w_left[idx], self.w_right[idx]

    def forward_curvature(self, s: float, lookahead_m: float) -> float:
        """Mean signed curvature over [s, s + lookahead] (used as context)."""
        n = max(2, int(lookahead_m / 0.5) + 1)
        probe = (s + np.linspace(0.0, lookahead_m, n) / self.total_length) % 1.0
        return float(self.curvature_at(probe).mean())

    # -- Frenet conversions ---------------------------------------------------

    def to_frenet(self, points) -> np.ndarray:
        """Project world points to (s, d).

        The closest centerline segment wins; exact ties resolve to the
        smallest s. Near sharp polyline joints on the concave side the
        nearest segment can be the neighbor of the generating one, which is
        inherent to polyline Frenet frames.
        """
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))[:, :2]
        out = np.empty((len(p), 2))
        starts = self.points
        dirs = self._seg_dir
        lens = self._seg_len
        for lo in range(0, len(p), _PROJECT_CHUNK):
            chunk = p[lo:lo + _PROJECT_CHUNK]
            rel = chunk[:, None, :] - starts[None, :, :]          # (N, M, 2)
            t = np.einsum("nmk,mk->nm", rel, dirs)
            t = np.clip(t, 0.0, lens[None, :])
            foot = starts[None, :, :] + t[..., None] * dirs[None, :, :]
            diff = chunk[:, None, :] - foot
            dist2 = np.einsum("nmk,nmk->nm", diff, diff)
            best = np.argmin(dist2, axis=1)                        # first = smallest s
            rows = np.arange(len(chunk))
            tb = t[rows, best]
            foot_b = foot[rows, best]
            d_vec = chunk - foot_b
            tangent = dirs[best]
            side = tangent[:, 0] * d_vec[:, 1] - tangent[:, 1] * d_vec[:, 0]
            d = np.sign(side) * np.sqrt(dist2[rows, best])
            s_m = self._cum_s[best] + tb
            out[lo:lo + len(chunk), 0] = (s_m % self.total_length) / self.total_length
            out[lo:lo + len(chunk), 1] = d
        return out

    def from_frenet(self, sd) -> np.ndarray:
        """Map (s, d) pairs back to world xy."""
        sd = np.atleast_2d(np.asarray(sd, dtype=np.float64))
        idx, along = self._locate(sd[:, 0] * self.total_length)
        foot = self.points[idx] + along[:, None] * self._seg_dir[idx]
        left = np.stack([-self._seg_dir[idx, 1], self._seg_dir[idx, 0]], axis=1)
        return foot + sd[:, 1:2] * left

    # -- persistence -----------------------------------------------------------

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "w_left", "w_right"])
            for (x, y), wl, wr in zip(self.points, self.w_left, self.w_right):
                writer.writerow([repr(float(x)), repr(float(y)), repr(float(wl)), repr(float(wr))])

    @classmethod
    def load_csv(cls, path) -> "Track":
        path = Path(path)
        if not path.exists():
            raise DataError(f"track file not found: {path}")
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(reader.fieldnames) < {"x", "y", "w_left", "w_right"}:
                raise DataError(f"track CSV {path} needs columns x,y,w_left,w_right")
            for row in reader:
                rows.append(
                    (float(row["x"]), float(row["y"]), float(row["w_left"]), float(row["w_right"]))
                )
        if len(rows) < 3:
            raise DataError("track CSV has fewer than 3 points")
        arr = np.array(rows)
        pts, wl, wr = arr[:, :2], arr[:, 2], arr[:, 3]
        if np.hypot(*(pts[0] - pts[-1])) < 1e-9:
            pts, wl, wr = pts[:-1], wl[:-1], wr[:-1]
        return cls(points=pts, w_left=wl, w_right=wr)


def progress_delta(s_true, s_pred) -> np.ndarray:
    """Signed wrap-minimal progress difference s_true - s_pred in (-0.5, 0.5]."""
    d = (np.asarray(s_true) - np.asarray(s_pred) + 0.5) % 1.0 - 0.5
    return np.where(d == -0.5, 0.5, d)


# -- synthetic circuit generation ---------------------------------------------


def track_from_segments(
    segments, half_width: float = 1.8, spacing: float = 0.25,
    start=(0.0, 0.0), heading: float = 0.0,
) -> Track:
    """Build a closed track from ("straight", length) / ("arc", radius, angle) parts.

    Arc angles are signed (left positive). The composed path must return to
    the start pose; closure is validated to 1e-6.
    """
    pos = np.array(start, dtype=np.float64)
    th = float(heading)
    pts: list = []
    kap: list = []
    for seg in segments:
        if seg[0] == "straight":
            _, length = seg
            n = max(2, int(math.ceil(length / spacing)) + 1)
            ts = np.linspace(0.0, length, n)[:-1]
            direction = np.array([math.cos(th), math.sin(th)])
            for t in ts:
                pts.append(pos + t * direction)
                kap.append(0.0)
            pos = pos + length * direction
        elif seg[0] == "arc":
            _, radius, angle = seg
            if radius <= 0.0:
                raise DataError("arc radius must be positive")
            side = 1.0 if angle >= 0.0 else -1.0
            center = pos + radius * np.array([-math.sin(th), math.cos(th)]) * side
            arc_len = abs(angle) * radius
            n = max(3, int(math.ceil(arc_len / spacing)) + 1)
            phis = np.linspace(0.0, angle, n)[:-1]
            start_angle = math.atan2(pos[1] - center[1], pos[0] - center[0])
            for phi in phis:
                ang = start_angle + phi
                pts.append(center + radius * np.array([math.cos(ang), math.sin(ang)]))
                kap.append(side / radius)
            th += angle
            end_angle = start_angle + angle
            pos = center + radius * np.array([math.cos(end_angle), math.sin(end_angle)])
        else:
            raise DataError(f"unknown segment kind {seg[0]!r}")
    closure = np.hypot(*(pos - np.asarray(start, dtype=np.float64)))
    if closure > 1e-6:
        raise DataError(f"segment list does not close (gap {closure:.3g} m)")
    turn = th - heading
    if abs(abs(turn) - 2.0 * math.pi) > 1e-9:
        raise DataError(f"net turn must be +-2*pi for a simple loop, got {turn:.6f}")
    points = np.array(pts)
    m = len(points)
    return Track(
        points=points,
        w_left=np.full(m, half_width),
        w_right=np.full(m, half_width),
        curvature=np.array(kap),
    )


def circle_track(radius: float = 20.0, half_width: float = 1.8, spacing: float = 0.25) -> Track:
    return track_from_segments(
        [("arc", radius, 2.0 * math.pi)], half_width=half_width, spacing=spacing
    )


def stadium_track(
    straight: float = 30.0, radius: float = 10.0, half_width: float = 1.8, spacing: float = 0.25
) -> Track:
    return track_from_segments(
        [
            ("straight", straight),
            ("arc", radius, math.pi),
            ("straight", straight),
            ("arc", radius, math.pi),
        ],
        half_width=half_width,
        spacing=spacing,
    )


def paperclip_track(half_width: float = 1.8, spacing: float = 0.25) -> Track:
    """Mixed circuit with left and right corners of varied radius.

    Straight lengths are solved so the loop closes exactly; total length is
    about 114 m with corner radii between 3 and 7 m.
    """
    quarter = math.pi / 2.0
    segments = [
        ("straight", 8.0), ("arc", 6.0, quarter),
        ("straight", 4.0), ("arc", 4.0, quarter),
        ("straight", 6.0), ("arc", 3.0, -quarter),
        ("straight", 6.0), ("arc", 5.0, quarter),
        ("straight", 10.0), ("arc", 7.0, quarter),
        ("straight", 17.0), ("arc", 4.0, quarter),
        ("straight", 17.0),
    ]
    return track_from_segments(segments, half_width=half_width, spacing=spacing)


_PRESETS = {
    "circle": circle_track,
    "stadium": stadium_track,
    "paperclip": paperclip_track,
}


def build_track(spec) -> Track:
    """Build a preset ('circle', 'stadium', 'paperclip'), or load a CSV path."""
    if isinstance(spec, Track):
        return spec
    if isinstance(spec, str) and spec in _PRESETS:
        return _PRESETS[spec]()
    if isinstance(spec, dict):
        name = spec.get("preset")
        if name not in _PRESETS:
            raise DataError(f"unknown track preset {name!r}")
        kwargs = {k: v for k, v in spec.items() if k != "preset"}
        return _PRESETS[name](**kwargs)
    path = Path(spec)
    if path.suffix == ".csv":
        return Track.load_csv(path)
    raise DataError(f"cannot interpret track spec {spec!r}")
