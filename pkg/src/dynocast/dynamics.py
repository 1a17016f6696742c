"""Surrogate vehicle dynamics and fixed-step integrators.

The kinematic bicycle model here serves two roles: it generates trajectory
rollouts from control sequences, and it *defines* dynamic feasibility — a
trajectory is feasible iff every transition can be reproduced by some bounded
control held constant over one sampling interval.

Headings are stored unwrapped (no modular reduction) so that integration and
finite differences stay continuous; wrapping belongs to metric/frame code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

from .errors import NonFiniteError, SteeringSingularityError


class VehicleState(NamedTuple):
    """Planar vehicle pose and speed [x, y, theta, v]."""

    x: float
    y: float
    theta: float
    v: float


class ControlInput(NamedTuple):
    """Steering angle (rad) and longitudinal acceleration (m/s^2)."""

    delta: float
    a: float


@dataclass(frozen=True)
class BicycleParams:
    """Kinematic bicycle with reference point midway between the axles.

    ``wheelbase_l`` is the front-to-rear axle distance; it is the model's
    only parameter.
    """

    wheelbase_l: float = 0.3302

    def __post_init__(self):
        if not (self.wheelbase_l > 0.0 and math.isfinite(self.wheelbase_l)):
            raise ValueError(f"wheelbase_l must be positive, got {self.wheelbase_l}")


@dataclass(frozen=True)
class CtrvParams:
    """Constant turn rate and velocity baseline parameters."""

    omega: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.omega) and math.isfinite(self.v)):
            raise ValueError("CtrvParams fields must be finite")


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integrator selection: ``method`` in {'euler', 'rk4'}."""

    method: str = "rk4"
    ts: float = 0.01

    def __post_init__(self):
        if self.method not in ("euler", "rk4"):
            raise ValueError(f"unknown integrator method {self.method!r}")
        if not (self.ts > 0.0 and math.isfinite(self.ts)):
            raise ValueError(f"ts must be positive, got {self.ts}")


@dataclass(frozen=True)
class ControlBounds:
    """Symmetric box bounds on the control channels."""

    delta_max: float = 7.0 * math.pi / 16.0
    a_max: float = 20.0

    def __post_init__(self):
        if not (0.0 < self.delta_max < math.pi / 2.0):
            raise ValueError("delta_max must lie in (0, pi/2)")
        if self.a_max <= 0.0:
            raise ValueError("a_max must be positive")

    def contains(self, u: ControlInput, tol: float = 1e-9) -> bool:
        return abs(u.delta) <= self.delta_max + tol and abs(u.a) <= self.a_max + tol


DerivFn = Callable[[VehicleState, ControlInput], tuple]


def bicycle_deriv(state: VehicleState, u: ControlInput, params: BicycleParams) -> tuple:
    """Right-hand side of the kinematic bicycle ODE.

    Returns (dx, dy, dtheta, dv) with

        dx = (v + L/2) cos(theta)
        dy = (v + L/2) sin(theta)
        dtheta = v tan(delta) / L
        dv = a

    The L/2 term offsets the forward speed of the mid-axle reference point;
    it is part of the model definition used throughout this package (see
    README, "model notes").

    Raises
    ------
    SteeringSingularityError
        If |delta| >= pi/2 (tangent singularity).
    NonFiniteError
        If any derivative component is NaN or infinite.
    """
    if abs(u.delta) >= math.pi / 2.0:
        raise SteeringSingularityError(
            f"steering angle {u.delta:.6f} rad at or beyond the tan singularity"
        )
    l = params.wheelbase_l
    speed = state.v + 0.5 * l
    dx = speed * math.cos(state.theta)
    dy = speed * math.sin(state.theta)
    dtheta = state.v * math.tan(u.delta) / l
    dv = u.a
    if not (
        math.isfinite(dx) and math.isfinite(dy) and math.isfinite(dtheta) and math.isfinite(dv)
    ):
        raise NonFiniteError(f"non-finite bicycle derivative at state={state}, u={u}")
    return (dx, dy, dtheta, dv)


def ctrv_deriv(state: VehicleState, params: CtrvParams) -> tuple:
    """Constant turn rate and velocity right-hand side.

    (dx, dy, dtheta, dv) = (v cos theta, v sin theta, omega, 0), with the
    speed read from the state (dv = 0 keeps it at its initial value) and the
    yaw rate frozen at ``params.omega``.
    """
    dx = state.v * math.cos(state.theta)
    dy = state.v * math.sin(state.theta)
    if not (math.isfinite(dx) and math.isfinite(dy) and math.isfinite(params.omega)):
        raise NonFiniteError(f"non-finite CTRV derivative at state={state}")
    return (dx, dy, params.omega, 0.0)


def make_bicycle_deriv(params: BicycleParams) -> DerivFn:
    """Bind bicycle parameters into a ``deriv_fn(state, u)`` closure."""

    def deriv(state: VehicleState, u: ControlInput) -> tuple:
        return bicycle_deriv(state, u, params)

    return deriv


def make_ctrv_deriv(params: CtrvParams) -> DerivFn:
    """Bind CTRV parameters into a ``deriv_fn(state, u)`` closure (u ignored)."""

    def deriv(state: VehicleState, u: ControlInput) -> tuple:
        return ctrv_deriv(state, params)

    return deriv


def step(
    state: VehicleState, u: ControlInput, deriv_fn: DerivFn, cfg: IntegratorConfig
) -> VehicleState:
    """Advance one sampling interval with the control held constant.

    Euler:  p' = p + ts * D(p, u).
    RK4:    classical four-stage scheme, u constant across stages.
    """
    ts = cfg.ts
    if cfg.method == "euler":
        d = deriv_fn(state, u)
        nxt = VehicleState(
            state.x + ts * d[0],
            state.y + ts * d[1],
            state.theta + ts * d[2],
            state.v + ts * d[3],
        )
    else:
        k1 = deriv_fn(state, u)
        s2 = VehicleState(
            state.x + 0.5 * ts * k1[0],
            state.y + 0.5 * ts * k1[1],
            state.theta + 0.5 * ts * k1[2],
            state.v + 0.5 * ts * k1[3],
        )
        k2 = deriv_fn(s2, u)
        s3 = VehicleState(
            state.x + 0.5 * ts * k2[0],
            state.y + 0.5 * ts * k2[1],
            state.theta + 0.5 * ts * k2[2],
            state.v + 0.5 * ts * k2[3],
        )
        k3 = deriv_fn(s3, u)
        s4 = VehicleState(
            state.x + ts * k3[0],
            state.y + ts * k3[1],
            state.theta + ts * k3[2],
            state.v + ts * k3[3],
        )
        k4 = deriv_fn(s4, u)
        sixth = ts / 6.0
        nxt = VehicleState(
            state.x + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            state.y + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            state.theta + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
            state.v + sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
        )
    if not all(math.isfinite(c) for c in nxt):
        raise NonFiniteError(f"integrator produced non-finite state from {state}, u={u}")
    return nxt


def rollout(
    state0: VehicleState,
    controls: Sequence[ControlInput],
    deriv_fn: DerivFn,
    cfg: IntegratorConfig,
) -> list[VehicleState]:
    """Apply ``step`` recursively; returns the n states *after* state0.

    ``state0`` itself is not included in the output.
    """
    if len(controls) < 1:
        raise ValueError("rollout needs at least one control input")
    out = []
    state = state0
    for i, u in enumerate(controls):
        try:
            state = step(state, u, deriv_fn, cfg)
        except NonFiniteError as exc:
            raise NonFiniteError(f"rollout failed at step {i}: {exc}") from exc
        out.append(state)
    return out


@dataclass
class FeasibilityReport:
    """Outcome of a dynamic-feasibility check.

    ``witnesses[i]`` reproduces the transition traj[i] -> traj[i+1]; on
    failure the list stops at the offending transition and ``violation``
    describes it.
    """

    feasible: bool
    witnesses: list[ControlInput] = field(default_factory=list)
    violation_index: Optional[int] = None
    violation_reason: Optional[str] = None
    residual: Optional[float] = None

    def __bool__(self) -> bool:
        return self.feasible


def _recover_bicycle_control(
    s0: VehicleState,
    s1: VehicleState,
    params: BicycleParams,
    cfg: IntegratorConfig,
) -> tuple[Optional[ControlInput], Optional[str]]:
    """Closed-form witness recovery for one transition.

    Speed integrates exactly under both schemes (dv = a is constant), so
    a = dv/ts. The heading increment is analytic as well: ts*v0*tan(d)/L
    under Euler and ts*(v0 + a*ts/2)*tan(d)/L under RK4, giving delta by
    arctangent. Position components are then checked by reproducing the step.
    """
    ts = cfg.ts
    a = (s1.v - s0.v) / ts
    dtheta = s1.theta - s0.theta
    v_eff = s0.v if cfg.method == "euler" else s0.v + 0.5 * a * ts
    if abs(v_eff) < 1e-12:
        if abs(dtheta) > 1e-12:
            return None, "heading change with (near-)zero speed is unreachable"
        return ControlInput(0.0, a), None
    delta = math.atan(dtheta * params.wheelbase_l / (ts * v_eff))
    return ControlInput(delta, a), None


def is_feasible(
    traj: Sequence[VehicleState],
    deriv_fn: DerivFn,
    cfg: IntegratorConfig,
    control_bounds: ControlBounds,
    params: Optional[BicycleParams] = None,
    tol_feas: float = 1e-6,
) -> FeasibilityReport:
    """Check whether each transition of ``traj`` admits a bounded control.

    For the bicycle model the witness is recovered in closed form (see
    ``_recover_bicycle_control``); the candidate is then validated by
    re-stepping and comparing all four state components against the observed
    next state within ``tol_feas``. ``params`` defaults to the standard
    wheelbase and must match ``deriv_fn``'s parameters for the witness
    recovery to be meaningful.
    """
    if len(traj) < 2:
        raise ValueError("feasibility needs a trajectory of length >= 2")
    if params is None:
        params = BicycleParams()

    witnesses: list[ControlInput] = []
    for i in range(len(traj) - 1):
        s0, s1 = traj[i], traj[i + 1]
        u, reason = _recover_bicycle_control(s0, s1, params, cfg)
        if u is None:
            return FeasibilityReport(False, witnesses, i, reason)
        if not control_bounds.contains(u):
            return FeasibilityReport(
                False, witnesses, i, f"recovered control {u} outside bounds"
            )
        try:
            repro = step(s0, u, deriv_fn, cfg)
        except (SteeringSingularityError, NonFiniteError) as exc:
            return FeasibilityReport(False, witnesses, i, str(exc))
        residual = max(
            abs(repro.x - s1.x),
            abs(repro.y - s1.y),
            abs(repro.theta - s1.theta),
            abs(repro.v - s1.v),
        )
        if residual > tol_feas:
            return FeasibilityReport(
                False, witnesses, i, "transition not reproducible by any bounded control",
                residual,
            )
        witnesses.append(u)
    return FeasibilityReport(True, witnesses)


def estimate_turn_rate_and_speed(
    thetas: Sequence[float], speeds: Sequence[float], ts: float
) -> CtrvParams:
    """Least-squares CTRV parameter estimate over an observation window.

    omega is the slope of the best-fit line theta(t); v is the mean observed
    speed. A window of identical headings degrades gracefully to omega = 0.
    """
    m = len(thetas)
    if m < 2:
        raise ValueError("need at least two samples to estimate a turn rate")
    # Closed-form simple linear regression on uniformly spaced times.
    t_mean = 0.5 * (m - 1) * ts
    th_mean = sum(thetas) / m
    num = 0.0
    den = 0.0
    for j, th in enumerate(thetas):
        dt = j * ts - t_mean
        num += dt * (th - th_mean)
        den += dt * dt
    omega = num / den if den > 0.0 else 0.0
    v = sum(speeds) / len(speeds)
    return CtrvParams(omega=omega, v=v)
