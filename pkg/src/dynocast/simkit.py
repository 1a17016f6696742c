"""Synthetic racing data: racelines, tracking controllers, closed-loop traces.

Everything is deterministic given a seed. Traces are produced by the same
bicycle stepper used for prediction rollouts, so generated motion is
dynamically feasible by construction with the logged controls as witnesses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import dynamics
from .errors import DataError
from .frames import wrap_angle
from .track import Track, polyline_curvature

V_CAP_DEFAULT = 5.0
A_LAT_DEFAULT = 2.5
A_LON_DEFAULT = 3.0

RACELINE_LABELS = ("center", "left", "right", "race")
CONTROLLER_LABELS = ("pure_pursuit", "stanley")
SPEED_SCALES = (0.75, 0.85, 1.0)


@dataclass
class RaceLine:
    """Closed reference path with per-point target speeds."""

    points: np.ndarray   # (K, 2)
    speeds: np.ndarray   # (K,)
    label: str           # center / left / right / race
    speed_scale: float = 1.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.speeds = np.asarray(self.speeds, dtype=np.float64)
        segs = np.roll(self.points, -1, axis=0) - self.points
        self._seg_len = np.linalg.norm(segs, axis=1)
        self._seg_dir = segs / self._seg_len[:, None]
        self._cum_s = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self.length = float(self._cum_s[-1])
        self._headings = np.arctan2(self._seg_dir[:, 1], self._seg_dir[:, 0])

    def nearest_index(self, x: float, y: float) -> int:
        d2 = (self.points[:, 0] - x) ** 2 + (self.points[:, 1] - y) ** 2
        return int(np.argmin(d2))

    def point_ahead(self, index: int, distance: float) -> np.ndarray:
        """Point ``distance`` meters further along the closed path."""
        s = (self._cum_s[index] + distance) % self.length
        seg = int(np.searchsorted(self._cum_s, s, side="right") - 1)
        seg = min(seg, len(self.points) - 1)
        return self.points[seg] + (s - self._cum_s[seg]) * self._seg_dir[seg]

    def heading_at(self, index: int) -> float:
        return float(self._headings[index])


def _smooth_closed(values: np.ndarray, window: int) -> np.ndarray:
    if window <= 1:
        return values
    kernel = np.ones(window) / window
    padded = np.concatenate([values[-window:], values, values[:window]])
    return np.convolve(padded, kernel, mode="same")[window:-window]


def speed_profile(points: np.ndarray, v_cap: float = V_CAP_DEFAULT,
                  a_lat: float = A_LAT_DEFAULT, a_lon: float = A_LON_DEFAULT) -> np.ndarray:
    """Curvature-limited target speeds with forward/backward accel limiting."""
    kappa = np.abs(polyline_curvature(points))
    kappa = _smooth_closed(kappa, 9)
    v = np.minimum(v_cap, np.sqrt(a_lat / np.maximum(kappa, 1e-9)))
    seg = np.linalg.norm(np.roll(points, -1, axis=0) - points, axis=1)
    k = len(points)
    # Two laps of each pass so limits propagate across the wrap.
    for _ in range(2):
        for i in range(k):
            j = (i + 1) % k
            v[j] = min(v[j], math.sqrt(v[i] ** 2 + 2.0 * a_lon * seg[i]))
        for i in range(k - 1, -1, -1):
            j = (i + 1) % k
            v[i] = min(v[i], math.sqrt(v[j] ** 2 + 2.0 * a_lon * seg[i]))
    return v


def _left_normals(points: np.ndarray) -> np.ndarray:
    forward = np.roll(points, -1, axis=0) - points
    left = np.stack([-forward[:, 1], forward[:, 0]], axis=1)
    return left / np.linalg.norm(left, axis=1)[:, None]


def offset_raceline(track: Track, offset_frac: float, label: str,
                    speed_scale: float = 1.0) -> RaceLine:
    """Centerline shifted laterally by ``offset_frac`` of the local half-width."""
    width = np.where(offset_frac >= 0.0, track.w_left, track.w_right)
    pts = track.points + (offset_frac * width)[:, None] * _left_normals(track.points)
    return RaceLine(pts, speed_profile(pts) * speed_scale, label, speed_scale)


def race_raceline(track: Track, cut_gain: float = 3.0, cap_frac: float = 0.75,
                  speed_scale: float = 1.0, speed_boost: float = 1.4) -> RaceLine:
    """Corner-cutting line: smoothed curvature pulls the path toward apexes.

    The lateral offset is capped at ``cap_frac`` of the half-width, well
    outside the +-0.3 band of the centerline offsets, and the speed profile
    runs a substantially higher envelope, so this line is out-of-distribution
    relative to the centerline offsets in both geometry and speed.
    """
    kappa = _smooth_closed(track.curvature, 31)
    cap = cap_frac * np.minimum(track.w_left, track.w_right)
    d = np.clip(cut_gain * kappa, -cap, cap)
    pts = track.points + d[:, None] * _left_normals(track.points)
    pts = np.stack([_smooth_closed(pts[:, 0], 15), _smooth_closed(pts[:, 1], 15)], axis=1)
    return RaceLine(pts, speed_profile(pts) * speed_scale * speed_boost, "race", speed_scale)


def standard_racelines(track: Track, speed_scale: float = 1.0,
                       offset_frac: float = 0.3) -> dict:
    return {
        "center": offset_raceline(track, 0.0, "center", speed_scale),
        "left": offset_raceline(track, +offset_frac, "left", speed_scale),
        "right": offset_raceline(track, -offset_frac, "right", speed_scale),
        "race": race_raceline(track, speed_scale=speed_scale),
    }


# -- controllers ---------------------------------------------------------------


def pure_pursuit(
    state: dynamics.VehicleState,
    raceline: RaceLine,
    lookahead_m: float = 0.8,
    wheelbase: float = 0.3302,
    speed_gain: float = 4.0,
    bounds: Optional[dynamics.ControlBounds] = None,
) -> dynamics.ControlInput:
    """Geometric path tracking: steer at the point ``lookahead_m`` ahead.

    delta = atan(2 L sin(alpha) / lookahead) with alpha the goal bearing in
    the vehicle frame; speed tracks the raceline target proportionally.
    """
    if bounds is None:
        bounds = dynamics.ControlBounds()
    idx = raceline.nearest_index(state.x, state.y)
    goal = raceline.point_ahead(idx, lookahead_m)
    alpha = wrap_angle(math.atan2(goal[1] - state.y, goal[0] - state.x) - state.theta)
    delta = math.atan2(2.0 * wheelbase * math.sin(alpha), lookahead_m)
    a = speed_gain * (raceline.speeds[idx] - state.v)
    return dynamics.ControlInput(
        float(np.clip(delta, -bounds.delta_max, bounds.delta_max)),
        float(np.clip(a, -bounds.a_max, bounds.a_max)),
    )


def stanley(
    state: dynamics.VehicleState,
    raceline: RaceLine,
    gain_k: float = 1.5,
    softening: float = 0.5,
    speed_gain: float = 4.0,
    wheelbase: float = 0.3302,  # accepted for a uniform controller signature
    bounds: Optional[dynamics.ControlBounds] = None,
) -> dynamics.ControlInput:
    """Heading-error plus cross-track-error steering law.

    delta = wrap(path_heading - theta) - atan(k e / (v + softening)), with e
    the left-positive lateral offset of the vehicle from the path; the
    softening constant guards the v -> 0 division.
    """
    if bounds is None:
        bounds = dynamics.ControlBounds()
    idx = raceline.nearest_index(state.x, state.y)
    tangent = raceline._seg_dir[idx]
    rel = np.array([state.x, state.y]) - raceline.points[idx]
    e = tangent[0] * rel[1] - tangent[1] * rel[0]
    heading_err = wrap_angle(raceline.heading_at(idx) - state.theta)
    delta = heading_err - math.atan2(gain_k * e, state.v + softening)
    a = speed_gain * (raceline.speeds[idx] - state.v)
    return dynamics.ControlInput(
        float(np.clip(delta, -bounds.delta_max, bounds.delta_max)),
        float(np.clip(a, -bounds.a_max, bounds.a_max)),
    )


CONTROLLERS: dict = {"pure_pursuit": pure_pursuit, "stanley": stanley}


# -- closed-loop simulation ------------------------------------------------------


class SimulationError(DataError):
    """Vehicle left the track corridor or the loop failed to progress."""


@dataclass
class Trace:
    """Time-ordered simulated states plus the controls that produced them."""

    states: np.ndarray    # (T+1, 4)
    controls: np.ndarray  # (T, 2)
    ts: float
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.states)


def simulate(
    track: Track,
    raceline: RaceLine,
    controller: str | Callable,
    duration: float,
    seed: int = 0,
    ts: float = 0.01,
    wheelbase: float = 0.3302,
    bounds: Optional[dynamics.ControlBounds] = None,
    containment_every: int = 10,
) -> Trace:
    """Run the tracking controller closed-loop at 1/ts Hz with RK4 stepping.

    The start point is staggered along the raceline by the seed. Raises
    SimulationError if the vehicle strays beyond twice the local corridor
    width.
    """
    if bounds is None:
        bounds = dynamics.ControlBounds()
    control_fn = CONTROLLERS[controller] if isinstance(controller, str) else controller
    rng = np.random.default_rng(seed)
    start_idx = int(rng.integers(0, len(raceline.points)))
    jitter = rng.normal(0.0, 0.02, size=2)
    p0 = raceline.points[start_idx] + jitter
    state = dynamics.VehicleState(
        float(p0[0]), float(p0[1]),
        raceline.heading_at(start_idx),
        float(raceline.speeds[start_idx] * 0.8),
    )
    params = dynamics.BicycleParams(wheelbase_l=wheelbase)
    deriv = dynamics.make_bicycle_deriv(params)
    cfg = dynamics.IntegratorConfig(method="rk4", ts=ts)

    n_steps = int(round(duration / ts))
    states = np.empty((n_steps + 1, 4))
    controls = np.empty((n_steps, 2))
    states[0] = state
    for k in range(n_steps):
        u = control_fn(state, raceline, wheelbase=wheelbase, bounds=bounds)
        state = dynamics.step(state, u, deriv, cfg)
        states[k + 1] = state
        controls[k] = u
        if k % containment_every == 0:
            sd = track.to_frenet(states[k + 1:k + 2, :2])[0]
            w_l, w_r = track.width_at(sd[0])
            limit = 2.0 * float(w_l[0] if sd[1] >= 0 else w_r[0])
            if abs(sd[1]) > limit:
                raise SimulationError(
                    f"vehicle left the corridor at step {k} (|d|={abs(sd[1]):.2f} > {limit:.2f})"
                )
    return Trace(
        states=states,
        controls=controls,
        ts=ts,
        metadata={
            "raceline": raceline.label,
            "controller": controller if isinstance(controller, str) else getattr(controller, "__name__", "custom"),
            "speed": raceline.speed_scale,
            "seed": seed,
            "wheelbase": wheelbase,
        },
    )


def save_trace_csv(path, trace: Trace) -> None:
    """Trace rows t,x,y,theta,v,delta,a with metadata in comment lines."""
    import csv as _csv

    with open(path, "w", newline="") as fh:
        for key in sorted(trace.metadata):
            fh.write(f"# {key}={trace.metadata[key]}\n")
        fh.write(f"# ts={trace.ts}\n")
        writer = _csv.writer(fh)
        writer.writerow(["t", "x", "y", "theta", "v", "delta", "a"])
        for k in range(len(trace.controls)):
            writer.writerow(
                [repr(k * trace.ts)]
                + [repr(float(v)) for v in trace.states[k]]
                + [repr(float(v)) for v in trace.controls[k]]
            )
        writer.writerow(
            [repr(len(trace.controls) * trace.ts)]
            + [repr(float(v)) for v in trace.states[-1]]
            + ["", ""]
        )


def load_trace_csv(path) -> Trace:
    import csv as _csv

    metadata = {}
    rows = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                metadata[key.strip()] = value
                continue
            rows.append(line)
    reader = _csv.reader(rows)
    header = next(reader)
    if header[:5] != ["t", "x", "y", "theta", "v"]:
        raise DataError(f"unexpected trace header in {path}")
    states, controls = [], []
    for row in reader:
        states.append([float(v) for v in row[1:5]])
        if row[5] != "":
            controls.append([float(v) for v in row[5:7]])
    ts = float(metadata.pop("ts", 0.01))
    for key in ("speed", "seed", "wheelbase"):
        if key in metadata:
            try:
                metadata[key] = float(metadata[key]) if key != "seed" else int(metadata[key])
            except ValueError:
                pass
    return Trace(states=np.array(states), controls=np.array(controls), ts=ts, metadata=metadata)


# -- windowing and splits -----------------------------------------------------


@dataclass
class WindowSet:
    """Flattened (observation, context, future) samples plus stratum labels."""

    obs: np.ndarray      # (N, l, 4)
    ctx: np.ndarray      # (N, ctx_dim)
    fut: np.ndarray      # (N, n, 4)
    strata: list         # N tuples (raceline, controller, speed)

    def __len__(self) -> int:
        return len(self.obs)

    @staticmethod
    def concatenate(parts: list) -> "WindowSet":
        return WindowSet(
            obs=np.concatenate([p.obs for p in parts]),
            ctx=np.concatenate([p.ctx for p in parts]),
            fut=np.concatenate([p.fut for p in parts]),
            strata=[s for p in parts for s in p.strata],
        )

    def take(self, idx) -> "WindowSet":
        idx = np.asarray(idx)
        return WindowSet(
            self.obs[idx], self.ctx[idx], self.fut[idx], [self.strata[i] for i in idx]
        )


def window(
    trace: Trace,
    track: Track,
    obs_len: int = 10,
    horizon: int = 60,
    noise_sigma: float = 0.1,
    seed: int = 0,
    context_lookahead: Optional[float] = None,
) -> WindowSet:
    """Cut a trace into non-overlapping (obs, ctx, fut) samples.

    Windows stride obs_len + horizon so no position is reused. Gaussian noise
    with std ``noise_sigma`` is added to the x, y, v channels of the
    observation window only; targets stay noiseless. The context is the mean
    signed track curvature ahead of the last observed pose.
    """
    rng = np.random.default_rng(seed)
    stride = obs_len + horizon
    n_samples = len(trace.states) // stride
    if n_samples == 0:
        return WindowSet(
            np.empty((0, obs_len, 4)), np.empty((0, 1)), np.empty((0, horizon, 4)), []
        )
    stratum = (
        trace.metadata.get("raceline", "?"),
        trace.metadata.get("controller", "?"),
        trace.metadata.get("speed", 0.0),
    )
    obs_list, ctx_list, fut_list = [], [], []
    for i in range(n_samples):
        base = i * stride
        obs = trace.states[base:base + obs_len].copy()
        fut = trace.states[base + obs_len:base + stride].copy()
        # Context uses the noiseless pose: it stands in for map knowledge.
        last = trace.states[base + obs_len - 1]
        if noise_sigma > 0.0:
            obs[:, [0, 1, 3]] += rng.normal(0.0, noise_sigma, size=(obs_len, 3))
        lookahead = (
            context_lookahead
            if context_lookahead is not None
            else max(last[3], 0.5) * horizon * trace.ts
        )
        s_here = track.to_frenet(last[None, :2])[0, 0]
        ctx = track.forward_curvature(s_here, lookahead)
        obs_list.append(obs)
        ctx_list.append([ctx])
        fut_list.append(fut)
    return WindowSet(
        obs=np.array(obs_list),
        ctx=np.array(ctx_list),
        fut=np.array(fut_list),
        strata=[stratum] * n_samples,
    )


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1

    def __post_init__(self):
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise DataError("split ratios must sum to 1")


def split(samples: WindowSet, spec: SplitSpec, seed: int = 0) -> tuple:
    """Stratified partition into (train, val, test) WindowSets.

    Each (raceline, controller, speed) stratum is shuffled then divided by
    the spec ratios, so every stratum is proportionally represented (within
    one sample) and no sample appears twice.
    """
    rng = np.random.default_rng(seed)
    by_stratum: dict = {}
    for i, s in enumerate(samples.strata):
        by_stratum.setdefault(s, []).append(i)
    train_idx, val_idx, test_idx = [], [], []
    for s in sorted(by_stratum):
        idx = np.array(by_stratum[s])
        rng.shuffle(idx)
        m = len(idx)
        n_tr = int(round(spec.train * m))
        n_va = int(round(spec.val * m))
        n_tr = min(n_tr, m)
        n_va = min(n_va, m - n_tr)
        train_idx.extend(idx[:n_tr])
        val_idx.extend(idx[n_tr:n_tr + n_va])
        test_idx.extend(idx[n_tr + n_va:])
    return samples.take(train_idx), samples.take(val_idx), samples.take(test_idx)


# -- full dataset generation -----------------------------------------------------


@dataclass
class GenerationConfig:
    """One simulation cell per (raceline, controller, speed) combination."""

    track: str = "paperclip"
    racelines: tuple = RACELINE_LABELS
    controllers: tuple = CONTROLLER_LABELS
    speed_scales: tuple = SPEED_SCALES
    base_duration: float = 120.0      # seconds per cell at speed scale 1.0
    obs_len: int = 10
    horizon: int = 60
    noise_sigma: float = 0.1
    ts: float = 0.01
    wheelbase: float = 0.3302
    split: SplitSpec = field(default_factory=SplitSpec)

    def cells(self) -> list:
        return [
            (rl, ctrl, sc)
            for rl in self.racelines
            for ctrl in self.controllers
            for sc in self.speed_scales
        ]

    def cell_duration(self, speed_scale: float) -> float:
        # Fixed lap count: slower scales run longer and yield more samples.
        return self.base_duration / speed_scale

    def expected_cell_samples(self, speed_scale: float) -> int:
        steps = int(round(self.cell_duration(speed_scale) / self.ts)) + 1
        return steps // (self.obs_len + self.horizon)


def generate_cell(config: GenerationConfig, track: Track, cell: tuple,
                  cell_index: int, seed: int) -> WindowSet:
    raceline_label, controller, speed_scale = cell
    lines = standard_racelines(track, speed_scale=speed_scale)
    cell_seed = int(np.random.SeedSequence([seed, cell_index]).generate_state(1)[0] & 0x7FFFFFFF)
    trace = simulate(
        track,
        lines[raceline_label],
        controller,
        duration=config.cell_duration(speed_scale),
        seed=cell_seed,
        ts=config.ts,
        wheelbase=config.wheelbase,
    )
    return window(
        trace,
        track,
        obs_len=config.obs_len,
        horizon=config.horizon,
        noise_sigma=config.noise_sigma,
        seed=cell_seed + 1,
    )


def generate_dataset(config: GenerationConfig, seed: int = 0, track: Optional[Track] = None,
                     jobs: int = 1) -> tuple:
    """Simulate every cell, window, and split; returns (train, val, test).

    Cells are independent and own RNG streams derived from (seed, cell), so
    results are identical regardless of ``jobs``.
    """
    from .track import build_track

    if track is None:
        track = build_track(config.track)
    cells = config.cells()
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(
                _generate_cell_star,
                [(config, track, cell, i, seed) for i, cell in enumerate(cells)],
            ))
    else:
        parts = [generate_cell(config, track, cell, i, seed) for i, cell in enumerate(cells)]
    empty = [cells[i] for i, p in enumerate(parts) if len(p) == 0]
    if len(empty) == len(cells):
        raise DataError("generation produced no samples; increase base_duration")
    samples = WindowSet.concatenate(parts)
    return split(samples, config.split, seed=seed)


def _generate_cell_star(args):
    return generate_cell(*args)
