"""Rigid local frames anchored at a vehicle pose."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def wrap_angle(theta):
    """Wrap angle(s) to (-pi, pi]."""
    return -((math.pi - np.asarray(theta)) % (2.0 * math.pi)) + math.pi


@dataclass(frozen=True)
class LocalFrame:
    """Frame of a reference pose: +x along its heading, origin at its position."""

    x: float
    y: float
    theta: float

    @classmethod
    def from_state(cls, state) -> "LocalFrame":
        return cls(float(state[0]), float(state[1]), float(state[2]))


def to_local(points, frame: LocalFrame) -> np.ndarray:
    """Express world points in ``frame``.

    Accepts (..., 2) xy, (..., 3) xy-theta, or (..., 4) xy-theta-v arrays; the
    heading column (when present) is shifted by -frame.theta and the speed
    column passes through untouched.
    """
    p = np.array(points, dtype=np.float64)
    c, s = math.cos(frame.theta), math.sin(frame.theta)
    dx = p[..., 0] - frame.x
    dy = p[..., 1] - frame.y
    out = p.copy()
    out[..., 0] = c * dx + s * dy
    out[..., 1] = -s * dx + c * dy
    if p.shape[-1] >= 3:
        out[..., 2] = p[..., 2] - frame.theta
    return out


def from_local(points, frame: LocalFrame) -> np.ndarray:
    """Inverse of ``to_local``; from_local(to_local(x)) == x to float precision."""
    p = np.array(points, dtype=np.float64)
    c, s = math.cos(frame.theta), math.sin(frame.theta)
    out = p.copy()
    out[..., 0] = frame.x + c * p[..., 0] - s * p[..., 1]
    out[..., 1] = frame.y + s * p[..., 0] + c * p[..., 1]
    if p.shape[-1] >= 3:
        out[..., 2] = p[..., 2] + frame.theta
    return out
