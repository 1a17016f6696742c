"""Conformalized quantile regression over driving-tailored score frames.

Two scoring functions turn trajectory errors into per-step 2-D samples:

* rotated-rectangle scores: signed (x, y) errors in the frame of the last
  observed pose;
* Frenet scores: signed (progress, lateral) errors relative to a track
  centerline, with the progress difference taken wrap-minimally.

Calibration follows split CQR: per step and dimension, baseline quantile
bounds [q_low, q_high] come from a first score set, the nonconformity
R = max(q_low - s, s - q_high) is evaluated on a held-out calibration set,
and its finite-sample (1 - delta_bar)(1 + 1/n) quantile inflates the bounds.
``delta_bar`` divides delta across the two dimensions (single-step mode) or
across dimensions and horizon steps (multi-step mode).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .frames import LocalFrame, from_local, to_local
from .track import Track, progress_delta

MODES = ("single", "multi")


# -- scoring -------------------------------------------------------------------


def score_rotated_rect(pred, truth, frame: LocalFrame) -> np.ndarray:
    """Signed (x, y) errors truth - pred, expressed in ``frame``.

    Both trajectories must be in world coordinates; shape (n, >=2) each.
    Returns (n, 2).
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape[0] != t.shape[0]:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    lp = to_local(p[:, :2], frame)
    lt = to_local(t[:, :2], frame)
    return lt - lp


def score_frenet(pred, truth, track: Track) -> np.ndarray:
    """Signed (progress, lateral) errors truth - pred on ``track``.

    Progress differences are wrap-minimal in (-0.5, 0.5]. Returns (n, 2).
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape[0] != t.shape[0]:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    fp = track.to_frenet(p[:, :2])
    ft = track.to_frenet(t[:, :2])
    ds = progress_delta(ft[:, 0], fp[:, 0])
    dd = ft[:, 1] - fp[:, 1]
    return np.stack([ds, dd], axis=1)


def score_batch(preds, truths, mode: str, frames=None, track: Track | None = None) -> np.ndarray:
    """Score a batch of trajectories; returns (N, n, 2).

    ``mode`` is 'rotated_rect' (needs per-sample frames (N, 3)) or 'frenet'
    (needs the track).
    """
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    n_samples = len(preds)
    out = np.empty((n_samples, preds.shape[1], 2))
    if mode == "rotated_rect":
        if frames is None:
            raise ValueError("rotated_rect scoring needs per-sample frames")
        for i in range(n_samples):
            frame = LocalFrame(frames[i][0], frames[i][1], frames[i][2])
            out[i] = score_rotated_rect(preds[i], truths[i], frame)
    elif mode == "frenet":
        if track is None:
            raise ValueError("frenet scoring needs a track")
        flat_p = preds[:, :, :2].reshape(-1, 2)
        flat_t = truths[:, :, :2].reshape(-1, 2)
        fp = track.to_frenet(flat_p).reshape(n_samples, -1, 2)
        ft = track.to_frenet(flat_t).reshape(n_samples, -1, 2)
        out[:, :, 0] = progress_delta(ft[:, :, 0], fp[:, :, 0])
        out[:, :, 1] = ft[:, :, 1] - fp[:, :, 1]
    else:
        raise ValueError(f"unknown score mode {mode!r}")
    return out


# -- finite-sample quantiles -----------------------------------------------------


def conformal_quantile_index(n: int, delta_bar: float) -> int:
    """0-based order-statistic index of the (1-delta_bar)(1+1/n) quantile.

    Uses the 'higher' convention (no interpolation) so the finite-sample
    coverage rule is exact. Raises DataError if n is too small for the level.
    """
    if n < 1:
        raise DataError("need at least one calibration sample")
    rank = math.ceil((1.0 - delta_bar) * (n + 1))  # 1-based
    if rank > n:
        minimum = math.ceil((1.0 - delta_bar) / delta_bar)
        raise DataError(
            f"insufficient calibration samples: n={n}, need at least {minimum} "
            f"for delta_bar={delta_bar:.6g}"
        )
    return max(rank - 1, 0)


def empirical_quantile_bounds(scores: np.ndarray, delta_bar: float) -> tuple:
    """Baseline [q_low, q_high]: delta_bar/2 and 1-delta_bar/2 empirical quantiles.

    Order statistics are taken outward (lower side rounds down, upper side
    rounds up, no interpolation) so both bounds are conservative.
    """
    s = np.sort(np.asarray(scores, dtype=np.float64))
    m = len(s)
    if m < 2:
        raise DataError("need at least two scores for baseline quantiles")
    lo_rank = max(int(math.floor((delta_bar / 2.0) * m)) - 1, 0)
    hi_rank = min(int(math.ceil((1.0 - delta_bar / 2.0) * m)), m - 1)
    return float(s[lo_rank]), float(s[hi_rank])


def delta_bar_for(delta: float, mode: str, horizon: int) -> float:
    """Union-bound split of delta: over 2 dims, and over steps in multi mode."""
    if mode == "single":
        return delta / 2.0
    if mode == "multi":
        return delta / (2.0 * horizon)
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


# -- calibrated regions -----------------------------------------------------------


DIM_NAMES = {"rotated_rect": ("x", "y"), "frenet": ("s", "d")}


@dataclass
class CalibratedRegion:
    """Per-step, per-dimension interval bounds [q_low - E, q_high + E]."""

    score_frame: str              # rotated_rect | frenet
    mode: str                     # single | multi
    delta: float
    delta_bar: float
    lower: np.ndarray             # (n, 2)
    upper: np.ndarray             # (n, 2)
    n_calibration: int

    @property
    def horizon(self) -> int:
        return self.lower.shape[0]

    def contains(self, scores: np.ndarray) -> np.ndarray:
        """Closed-interval membership per step and dimension.

        ``scores`` is (..., n, 2); returns booleans of the same shape.
        """
        s = np.asarray(scores, dtype=np.float64)
        return (s >= self.lower) & (s <= self.upper)

    def to_dict(self) -> dict:
        names = DIM_NAMES[self.score_frame]
        return {
            "score_frame": self.score_frame,
            "mode": self.mode,
            "delta": self.delta,
            "delta_bar": self.delta_bar,
            "n_calibration": self.n_calibration,
            "dimensions": list(names),
            "steps": [
                {
                    "step": t + 1,
                    names[0]: {"low": self.lower[t, 0], "high": self.upper[t, 0]},
                    names[1]: {"low": self.lower[t, 1], "high": self.upper[t, 1]},
                }
                for t in range(self.horizon)
            ],
        }

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def from_dict(cls, payload: dict) -> "CalibratedRegion":
        names = DIM_NAMES[payload["score_frame"]]
        steps = sorted(payload["steps"], key=lambda st: st["step"])
        lower = np.array([[st[names[0]]["low"], st[names[1]]["low"]] for st in steps])
        upper = np.array([[st[names[0]]["high"], st[names[1]]["high"]] for st in steps])
        return cls(
            score_frame=payload["score_frame"],
            mode=payload["mode"],
            delta=payload["delta"],
            delta_bar=payload["delta_bar"],
            lower=lower,
            upper=upper,
            n_calibration=payload["n_calibration"],
        )

    @classmethod
    def load_json(cls, path) -> "CalibratedRegion":
        return cls.from_dict(json.loads(Path(path).read_text()))


def cqr_calibrate(
    train_scores: np.ndarray,
    calib_scores: np.ndarray,
    delta: float,
    mode: str = "single",
    score_frame: str = "rotated_rect",
) -> CalibratedRegion:
    """Split-CQR calibration over (N, n, 2) score arrays.

    Baseline quantiles come from ``train_scores``; the nonconformity
    inflation from ``calib_scores``. Each step and dimension is processed
    independently at level ``delta_bar``.
    """
    tr = np.asarray(train_scores, dtype=np.float64)
    ca = np.asarray(calib_scores, dtype=np.float64)
    if tr.ndim != 3 or tr.shape[2] != 2 or ca.ndim != 3 or ca.shape[2] != 2:
        raise ValueError("scores must have shape (N, n, 2)")
    if tr.shape[1] != ca.shape[1]:
        raise ValueError("train and calibration horizons differ")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    horizon = tr.shape[1]
    dbar = delta_bar_for(delta, mode, horizon)
    n_cal = ca.shape[0]
    idx = conformal_quantile_index(n_cal, dbar)  # raises if n_cal too small

    lower = np.empty((horizon, 2))
    upper = np.empty((horizon, 2))
    for t in range(horizon):
        for k in range(2):
            q_low, q_high = empirical_quantile_bounds(tr[:, t, k], dbar)
            s = ca[:, t, k]
            nonconformity = np.maximum(q_low - s, s - q_high)
            inflation = float(np.sort(nonconformity)[idx])
            lower[t, k] = q_low - inflation
            upper[t, k] = q_high + inflation
    return CalibratedRegion(
        score_frame=score_frame,
        mode=mode,
        delta=delta,
        delta_bar=dbar,
        lower=lower,
        upper=upper,
        n_calibration=n_cal,
    )


# -- coverage ----------------------------------------------------------------------


@dataclass
class CoverageReport:
    """Empirical coverage rates for one calibrated region on a test set."""

    per_dim_single: dict     # dim name -> fraction over (sample, step)
    joint_single: float      # both dims, per (sample, step)
    per_dim_multi: dict      # dim name -> fraction of samples covered at all steps
    joint_multi: float       # both dims at all steps
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "per_dim_single": self.per_dim_single,
            "joint_single": self.joint_single,
            "per_dim_multi": self.per_dim_multi,
            "joint_multi": self.joint_multi,
            "n_samples": self.n_samples,
        }


def coverage_report(region: CalibratedRegion, test_scores: np.ndarray) -> CoverageReport:
    """Fractions of test scores inside the region.

    Single-step rates count (sample, step) pairs; multi-step rates count
    samples whose whole horizon stays inside.
    """
    inside = region.contains(test_scores)       # (N, n, 2)
    names = DIM_NAMES[region.score_frame]
    joint = inside.all(axis=2)                  # (N, n)
    return CoverageReport(
        per_dim_single={names[k]: float(inside[:, :, k].mean()) for k in range(2)},
        joint_single=float(joint.mean()),
        per_dim_multi={names[k]: float(inside[:, :, k].all(axis=1).mean()) for k in range(2)},
        joint_multi=float(joint.all(axis=1).mean()),
        n_samples=int(test_scores.shape[0]),
    )


# -- region geometry -----------------------------------------------------------------


def region_polygons(
    region: CalibratedRegion,
    pred,
    frame: LocalFrame | None = None,
    track: Track | None = None,
    arc_points: int = 8,
) -> list:
    """World-frame polygon per horizon step around one predicted trajectory.

    Rotated-rectangle regions map rectangle corners through the sample frame.
    Frenet regions sample >= 8 boundary points per edge through the track
    frame, so polygons bend with the centerline.
    """
    p = np.asarray(pred, dtype=np.float64)
    if p.shape[0] != region.horizon:
        raise ValueError("prediction horizon does not match the region")
    polys = []
    if region.score_frame == "rotated_rect":
        if frame is None:
            raise ValueError("rotated_rect polygons need the sample frame")
        lp = to_local(p[:, :2], frame)
        for t in range(region.horizon):
            (lo_x, lo_y), (hi_x, hi_y) = region.lower[t], region.upper[t]
            corners = np.array(
                [
                    [lp[t, 0] + lo_x, lp[t, 1] + lo_y],
                    [lp[t, 0] + hi_x, lp[t, 1] + lo_y],
                    [lp[t, 0] + hi_x, lp[t, 1] + hi_y],
                    [lp[t, 0] + lo_x, lp[t, 1] + hi_y],
                ]
            )
            polys.append(from_local(corners, frame))
    elif region.score_frame == "frenet":
        if track is None:
            raise ValueError("frenet polygons need the track")
        fp = track.to_frenet(p[:, :2])
        m = max(arc_points, 2)
        for t in range(region.horizon):
            (lo_s, lo_d), (hi_s, hi_d) = region.lower[t], region.upper[t]
            s0, s1 = fp[t, 0] + lo_s, fp[t, 0] + hi_s
            d0, d1 = fp[t, 1] + lo_d, fp[t, 1] + hi_d
            s_fwd = np.linspace(s0, s1, m)
            d_up = np.linspace(d0, d1, m)
            boundary = np.concatenate(
                [
                    np.stack([s_fwd, np.full(m, d0)], axis=1),        # low-d edge
                    np.stack([np.full(m - 1, s1), d_up[1:]], axis=1), # high-s edge
                    np.stack([s_fwd[::-1][1:], np.full(m - 1, d1)], axis=1),
                    np.stack([np.full(m - 1, s0), d_up[::-1][1:]], axis=1),
                ]
            )
            boundary[:, 0] = np.mod(boundary[:, 0], 1.0)
            polys.append(track.from_frenet(boundary))
    else:
        raise ValueError(f"unknown score frame {region.score_frame!r}")
    return polys


def save_polygons_csv(path, polygons) -> None:
    """Flatten per-step polygons to rows (step, vertex, x, y) for plotting."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "vertex", "x", "y"])
        for t, poly in enumerate(polygons, start=1):
            for j, (x, y) in enumerate(np.asarray(poly)):
                writer.writerow([t, j, repr(float(x)), repr(float(y))])
