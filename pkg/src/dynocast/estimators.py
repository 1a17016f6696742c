"""Prediction heads with a scikit-learn estimator surface.

Three heads share the feature-matrix interface (flattened observation window
plus context columns):

* ``PhysicsPredictor`` decodes a bounded control-input sequence from the
  window and integrates it through the kinematic bicycle model, so its
  trajectories are dynamically feasible by construction.
* ``LstmPredictor`` decodes free-form per-step state increments (no
  feasibility guarantee); it is the learned baseline.
* ``CtrvPredictor`` holds turn rate and speed constant; no training.

All heads localize the window into the frame of its last observed pose, so
the networks never see absolute coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from . import dynamics
from .autodiff import Tape, tanh_bound
from .frames import LocalFrame, from_local
from .metrics import ade as ade_metric
from .metrics import evaluate_trajectories
from .nn import (
    control_scale_vector,
    init_lstm_params,
    init_mlp_params,
    load_checkpoint,
    lstm_forward,
    mlp_forward,
    save_checkpoint,
)
from .training import (
    DEFAULT_LOSS_WEIGHTS,
    CurriculumSchedule,
    TrainConfig,
    run_training,
    tape_weighted_l1,
)
from .validation import check_features, check_fitted, check_targets, join_targets

DELTA_MAX_DEFAULT = 7.0 * math.pi / 16.0
_PREDICT_CHUNK = 512


@dataclass
class PredictedTrajectory:
    """One predicted future: world-frame states, optional decoded controls."""

    states: np.ndarray                    # (horizon, 4)
    source: str
    controls: Optional[np.ndarray] = None  # (horizon, 2) for the physics head


def localize_windows(obs: np.ndarray, ctx: np.ndarray) -> tuple:
    """Express each window in its last pose's frame and append the context.

    Returns (frames (N, 3), features (N, l, 4 + ctx_dim)). The heading
    channel becomes the offset from the final heading; speed passes through.
    """
    frames = obs[:, -1, :3]
    cos_t = np.cos(frames[:, 2])[:, None]
    sin_t = np.sin(frames[:, 2])[:, None]
    dx = obs[:, :, 0] - frames[:, None, 0]
    dy = obs[:, :, 1] - frames[:, None, 1]
    feats = np.stack(
        [
            cos_t * dx + sin_t * dy,
            -sin_t * dx + cos_t * dy,
            obs[:, :, 2] - frames[:, None, 2],
            obs[:, :, 3],
        ],
        axis=-1,
    )
    ctx_tiled = np.repeat(ctx[:, None, :], obs.shape[1], axis=1)
    return frames, np.concatenate([feats, ctx_tiled], axis=-1)


def localize_targets(fut: np.ndarray, frames: np.ndarray) -> np.ndarray:
    """Targets in the same per-sample frames; see ``localize_windows``."""
    cos_t = np.cos(frames[:, 2])[:, None]
    sin_t = np.sin(frames[:, 2])[:, None]
    dx = fut[:, :, 0] - frames[:, None, 0]
    dy = fut[:, :, 1] - frames[:, None, 1]
    return np.stack(
        [
            cos_t * dx + sin_t * dy,
            -sin_t * dx + cos_t * dy,
            fut[:, :, 2] - frames[:, None, 2],
            fut[:, :, 3],
        ],
        axis=-1,
    )


def delocalize_states(local_states: np.ndarray, frames: np.ndarray) -> np.ndarray:
    """Map (N, n, 4) local-frame states back to the world frame."""
    out = np.empty_like(local_states)
    for i in range(len(frames)):
        frame = LocalFrame(frames[i, 0], frames[i, 1], frames[i, 2])
        out[i] = from_local(local_states[i], frame)
    return out


def _encode(tape: Tape, param_ids: dict, feats: np.ndarray) -> int:
    """LSTM over the window steps followed by the MLP decoder."""
    inputs = [tape.leaf(feats[:, t, :]) for t in range(feats.shape[1])]
    final_h, _ = lstm_forward(tape, param_ids, inputs)
    return mlp_forward(tape, param_ids, final_h)


def physics_rollout_graph(
    tape: Tape,
    controls_node: int,
    v0: np.ndarray,
    steps: int,
    ts: float,
    wheelbase: float,
    method: str,
) -> list:
    """Integrate the bicycle model on the tape from the local-frame origin.

    ``controls_node`` holds (B, 2*horizon) bounded controls interleaved as
    (delta, a) per step. Returns one (x, y, theta, v) node tuple per step.
    """
    batch = len(v0)
    x = tape.leaf(np.zeros((batch, 1)))
    y = tape.leaf(np.zeros((batch, 1)))
    th = tape.leaf(np.zeros((batch, 1)))
    v = tape.leaf(v0.reshape(batch, 1))
    half_l = tape.leaf(np.asarray(wheelbase / 2.0))
    out = []
    for j in range(steps):
        delta = tape.slice_cols(controls_node, 2 * j, 2 * j + 1)
        acc = tape.slice_cols(controls_node, 2 * j + 1, 2 * j + 2)
        tan_over_l = tape.scale(tape.tan(delta), 1.0 / wheelbase)

        def deriv(th_n, v_n):
            vp = tape.add(v_n, half_l)
            return (
                tape.mul(vp, tape.cos(th_n)),
                tape.mul(vp, tape.sin(th_n)),
                tape.mul(v_n, tan_over_l),
            )

        if method == "euler":
            k = deriv(th, v)
            x = tape.add(x, tape.scale(k[0], ts))
            y = tape.add(y, tape.scale(k[1], ts))
            th = tape.add(th, tape.scale(k[2], ts))
            v = tape.add(v, tape.scale(acc, ts))
        else:
            k1 = deriv(th, v)
            v_half = tape.add(v, tape.scale(acc, ts / 2.0))
            th2 = tape.add(th, tape.scale(k1[2], ts / 2.0))
            k2 = deriv(th2, v_half)
            th3 = tape.add(th, tape.scale(k2[2], ts / 2.0))
            k3 = deriv(th3, v_half)
            v_full = tape.add(v, tape.scale(acc, ts))
            th4 = tape.add(th, tape.scale(k3[2], ts))
            k4 = deriv(th4, v_full)

            def combine(base, a1, a2, a3, a4):
                s = tape.add(tape.add(a1, tape.scale(tape.add(a2, a3), 2.0)), a4)
                return tape.add(base, tape.scale(s, ts / 6.0))

            x = combine(x, k1[0], k2[0], k3[0], k4[0])
            y = combine(y, k1[1], k2[1], k3[1], k4[1])
            th = combine(th, k1[2], k2[2], k3[2], k4[2])
            v = v_full
        out.append((x, y, th, v))
    return out


def delta_rollout_graph(tape: Tape, deltas_node: int, v0: np.ndarray, steps: int) -> list:
    """Accumulate free-form per-step state increments from the local origin."""
    batch = len(v0)
    x = tape.leaf(np.zeros((batch, 1)))
    y = tape.leaf(np.zeros((batch, 1)))
    th = tape.leaf(np.zeros((batch, 1)))
    v = tape.leaf(v0.reshape(batch, 1))
    out = []
    for j in range(steps):
        x = tape.add(x, tape.slice_cols(deltas_node, 4 * j, 4 * j + 1))
        y = tape.add(y, tape.slice_cols(deltas_node, 4 * j + 1, 4 * j + 2))
        th = tape.add(th, tape.slice_cols(deltas_node, 4 * j + 2, 4 * j + 3))
        v = tape.add(v, tape.slice_cols(deltas_node, 4 * j + 3, 4 * j + 4))
        out.append((x, y, th, v))
    return out


def _stack_step_values(tape: Tape, step_nodes: list) -> np.ndarray:
    """Read (B, steps, 4) forward values out of per-step node tuples."""
    cols = [
        np.concatenate([tape.value(node) for node in step], axis=1)[:, :, None]
        for step in step_nodes
    ]
    return np.concatenate(cols, axis=2).transpose(0, 2, 1)


class _NeuralHeadMixin:
    """Shared fit/predict plumbing for the two learned heads."""

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            lr=self.lr,
            momentum=self.momentum,
            batch_size=self.batch_size,
            seed=self.seed,
            clip_grad=self.clip_grad,
            lr_schedule=self.lr_schedule,
        )

    def _schedule(self) -> Optional[CurriculumSchedule]:
        if not self.curriculum:
            return None
        return CurriculumSchedule(
            h0=self.curriculum_start, epochs_per_increment=self.curriculum_every
        )

    def _fit_common(self, X, y, X_val=None, y_val=None, resume_from=None):
        obs, ctx = check_features(X, self.obs_len, self.ctx_dim)
        fut = check_targets(y, self.horizon, len(obs))
        frames, feats = localize_windows(obs, ctx)
        local_fut = localize_targets(fut, frames)
        self.n_features_in_ = self.obs_len * 4 + self.ctx_dim

        rng = np.random.default_rng(self.seed)
        params = self._init_params(rng, feats.shape[-1])
        start_epoch = 0
        velocity = None
        if resume_from is not None:
            params = {k: v.copy() for k, v in resume_from["params"].items()}
            velocity = resume_from.get("velocity")
            start_epoch = int(resume_from.get("epochs_done", 0))

        def build(tape, param_ids, idx, h):
            step_nodes = self._forward_graph(tape, param_ids, feats[idx], h)
            return tape_weighted_l1(
                tape, step_nodes, local_fut[idx], self.loss_weights, h
            )

        validate = None
        if X_val is not None and y_val is not None:
            obs_v, ctx_v = check_features(X_val, self.obs_len, self.ctx_dim)
            fut_v = check_targets(y_val, self.horizon, len(obs_v))
            frames_v, feats_v = localize_windows(obs_v, ctx_v)
            local_fut_v = localize_targets(fut_v, frames_v)
            cap = min(len(feats_v), 512)

            def validate(params_now):
                local_pred = self._forward_values(params_now, feats_v[:cap])
                report = evaluate_trajectories(local_pred[:, :, :3], local_fut_v[:cap, :, :3])
                return report.ade, report.fde, report.iou

        result = run_training(
            params,
            build,
            n_samples=len(feats),
            horizon=self.horizon,
            cfg=self._train_config(),
            schedule=self._schedule(),
            validate=validate,
            val_every=self.val_every,
            rng=rng,
            start_epoch=start_epoch,
            velocity=velocity,
        )
        self.params_ = result.params
        self.log_ = result.log
        self.loss_trace_ = result.loss_trace
        self.velocity_ = result.velocity
        self.epochs_done_ = result.epochs_done
        return self

    def _forward_values(self, params: dict, feats: np.ndarray) -> np.ndarray:
        """Local-frame predicted states (N, horizon, 4) without gradients."""
        outs = []
        for lo in range(0, len(feats), _PREDICT_CHUNK):
            chunk = feats[lo:lo + _PREDICT_CHUNK]
            tape = Tape()
            param_ids = {name: tape.leaf(arr) for name, arr in params.items()}
            step_nodes = self._forward_graph(tape, param_ids, chunk, self.horizon)
            outs.append(_stack_step_values(tape, step_nodes))
        return np.concatenate(outs, axis=0)

    def score(self, X, y) -> float:
        """Negative ADE (higher is better), for model-selection tooling."""
        pred = self.predict(X)
        truth = check_targets(y, self.horizon)
        return -ade_metric(pred.reshape(truth.shape), truth)


class PhysicsPredictor(_NeuralHeadMixin, BaseEstimator):
    """Intent-decoding trajectory predictor constrained by bicycle dynamics.

    An LSTM encodes the localized observation window (context appended to
    every step); an MLP decodes one (steering, acceleration) pair per horizon
    step; a scaled tanh squashes them inside the control bounds; and the
    surrogate bicycle model integrates them into a trajectory. Training
    backpropagates the weighted L1 trajectory loss through the integration,
    optionally under an increasing-horizon curriculum.

    Every prediction is dynamically feasible for the configured bounds and
    integrator by construction.

    Parameters
    ----------
    obs_len, horizon : int
        Observation window length and prediction horizon (samples).
    ctx_dim : int
        Number of context columns appended to the feature matrix.
    hidden_size, decoder_width : int
        LSTM hidden size and MLP hidden width.
    wheelbase : float
        Bicycle model axle distance (m).
    ts : float
        Sampling interval (s); one integrator step per sample.
    method : {'euler', 'rk4'}
        Fixed-step integrator used for rollouts.
    delta_max, a_max : float
        Control bounds; steering is kept below pi/2 for the tangent.
    curriculum : bool
        Train with the increasing-horizon loss schedule.
    """

    def __init__(
        self,
        obs_len: int = 10,
        horizon: int = 60,
        ctx_dim: int = 1,
        hidden_size: int = 16,
        decoder_width: int = 64,
        wheelbase: float = 0.3302,
        ts: float = 0.01,
        method: str = "rk4",
        delta_max: float = DELTA_MAX_DEFAULT,
        a_max: float = 20.0,
        loss_weights: tuple = DEFAULT_LOSS_WEIGHTS,
        curriculum: bool = False,
        curriculum_start: int = 1,
        curriculum_every: int = 2,
        epochs: int = 350,
        lr: float = 0.02,
        momentum: float = 0.9,
        batch_size: int = 64,
        clip_grad: Optional[float] = None,
        lr_schedule: str = "cosine",
        seed: int = 0,
        val_every: int = 25,
    ):
        self.obs_len = obs_len
        self.horizon = horizon
        self.ctx_dim = ctx_dim
        self.hidden_size = hidden_size
        self.decoder_width = decoder_width
        self.wheelbase = wheelbase
        self.ts = ts
        self.method = method
        self.delta_max = delta_max
        self.a_max = a_max
        self.loss_weights = loss_weights
        self.curriculum = curriculum
        self.curriculum_start = curriculum_start
        self.curriculum_every = curriculum_every
        self.epochs = epochs
        self.lr = lr
        self.momentum = momentum
        self.batch_size = batch_size
        self.clip_grad = clip_grad
        self.lr_schedule = lr_schedule
        self.seed = seed
        self.val_every = val_every

    # -- model pieces -------------------------------------------------------

    def _init_params(self, rng, input_size: int) -> dict:
        params = init_lstm_params(input_size, self.hidden_size, rng)
        params.update(
            init_mlp_params(
                [self.hidden_size, self.decoder_width, 2 * self.horizon], rng
            )
        )
        return params

    def _omega(self) -> np.ndarray:
        return control_scale_vector(self.delta_max, self.a_max, self.horizon)

    def _forward_graph(self, tape, param_ids, feats, steps):
        raw = _encode(tape, param_ids, feats)
        u = tanh_bound(tape, raw, self._omega())
        v0 = feats[:, -1, 3]
        return physics_rollout_graph(
            tape, u, v0, steps, self.ts, self.wheelbase, self.method
        )

    def _controls_values(self, feats: np.ndarray) -> np.ndarray:
        outs = []
        for lo in range(0, len(feats), _PREDICT_CHUNK):
            chunk = feats[lo:lo + _PREDICT_CHUNK]
            tape = Tape()
            param_ids = {name: tape.leaf(arr) for name, arr in self.params_.items()}
            raw = _encode(tape, param_ids, chunk)
            u = tanh_bound(tape, raw, self._omega())
            outs.append(tape.value(u).reshape(len(chunk), self.horizon, 2))
        return np.concatenate(outs, axis=0)

    # -- estimator API ------------------------------------------------------

    def fit(self, X, y, X_val=None, y_val=None, resume_from=None):
        """Train the intent decoder; returns self.

        Optional validation arrays populate the epoch log with ADE/FDE/IoU
        snapshots every ``val_every`` epochs. ``resume_from`` (a dict with
        params/velocity/epochs_done, e.g. from ``load_predictor``) continues
        an earlier run's exact trajectory.
        """
        return self._fit_common(X, y, X_val=X_val, y_val=y_val, resume_from=resume_from)

    def predict_controls(self, X) -> np.ndarray:
        """Bounded decoded controls, shape (N, horizon, 2) as (delta, a)."""
        check_fitted(self)
        obs, ctx = check_features(X, self.obs_len, self.ctx_dim)
        _, feats = localize_windows(obs, ctx)
        return self._controls_values(feats)

    def predict(self, X) -> np.ndarray:
        """World-frame trajectories, flattened to (N, horizon*4).

        The output is produced by the scalar reference integrator from the
        last observed state, so feasibility witnesses recover exactly the
        decoded controls.
        """
        check_fitted(self)
        obs, ctx = check_features(X, self.obs_len, self.ctx_dim)
        controls = self.predict_controls(X)
        params = dynamics.BicycleParams(wheelbase_l=self.wheelbase)
        deriv = dynamics.make_bicycle_deriv(params)
        cfg = dynamics.IntegratorConfig(method=self.method, ts=self.ts)
        out = np.empty((len(obs), self.horizon, 4))
        for i in range(len(obs)):
            state0 = dynamics.VehicleState(*obs[i, -1])
            traj = dynamics.rollout(
                state0,
                [dynamics.ControlInput(*u) for u in controls[i]],
                deriv,
                cfg,
            )
            out[i] = np.array(traj)
        return join_targets(out)

    def predict_trajectories(self, X) -> list:
        """Per-sample ``PredictedTrajectory`` objects with decoded controls."""
        states = self.predict(X).reshape(-1, self.horizon, 4)
        controls = self.predict_controls(X)
        return [
            PredictedTrajectory(states=s, source="physics", controls=c)
            for s, c in zip(states, controls)
        ]

    def integrator_config(self) -> dynamics.IntegratorConfig:
        return dynamics.IntegratorConfig(method=self.method, ts=self.ts)

    def control_bounds(self) -> dynamics.ControlBounds:
        return dynamics.ControlBounds(delta_max=self.delta_max, a_max=self.a_max)


class LstmPredictor(_NeuralHeadMixin, BaseEstimator):
    """Unconstrained sequence-to-sequence baseline.

    Same encoder as the physics head, but the MLP decodes per-step state
    increments directly (cumulated from the last observed state). Nothing
    ties consecutive states to reachable motion, so feasibility checks are
    expected to fail on parts of its output.
    """

    def __init__(
        self,
        obs_len: int = 10,
        horizon: int = 60,
        ctx_dim: int = 1,
        hidden_size: int = 16,
        decoder_width: int = 64,
        loss_weights: tuple = DEFAULT_LOSS_WEIGHTS,
        curriculum: bool = False,
        curriculum_start: int = 1,
        curriculum_every: int = 2,
        epochs: int = 350,
        lr: float = 0.01,
        momentum: float = 0.9,
        batch_size: int = 64,
        clip_grad: Optional[float] = None,
        lr_schedule: str = "cosine",
        seed: int = 0,
        val_every: int = 25,
    ):
        self.obs_len = obs_len
        self.horizon = horizon
        self.ctx_dim = ctx_dim
        self.hidden_size = hidden_size
        self.decoder_width = decoder_width
        self.loss_weights = loss_weights
        self.curriculum = curriculum
        self.curriculum_start = curriculum_start
        self.curriculum_every = curriculum_every
        self.epochs = epochs
        self.lr = lr
        self.momentum = momentum
        self.batch_size = batch_size
        self.clip_grad = clip_grad
        self.lr_schedule = lr_schedule
        self.seed = seed
        self.val_every = val_every

    def _init_params(self, rng, input_size: int) -> dict:
        params = init_lstm_params(input_size, self.hidden_size, rng)
        params.update(
            init_mlp_params(
                [self.hidden_size, self.decoder_width, 4 * self.horizon], rng
            )
        )
        return params

    def _forward_graph(self, tape, param_ids, feats, steps):
        raw = _encode(tape, param_ids, feats)
        v0 = feats[:, -1, 3]
        return delta_rollout_graph(tape, raw, v0, steps)

    def fit(self, X, y, X_val=None, y_val=None, resume_from=None):
        """Train the delta decoder; returns self."""
        return self._fit_common(X, y, X_val=X_val, y_val=y_val, resume_from=resume_from)

    def predict(self, X) -> np.ndarray:
        """World-frame trajectories, flattened to (N, horizon*4)."""
        check_fitted(self)
        obs, ctx = check_features(X, self.obs_len, self.ctx_dim)
        frames, feats = localize_windows(obs, ctx)
        local = self._forward_values(self.params_, feats)
        return join_targets(delocalize_states(local, frames))

    def predict_trajectories(self, X) -> list:
        states = self.predict(X).reshape(-1, self.horizon, 4)
        return [PredictedTrajectory(states=s, source="lstm") for s in states]


class CtrvPredictor(BaseEstimator):
    """Constant turn rate and velocity physics baseline.

    The yaw rate is the least-squares slope of the window headings and the
    speed is the window mean; both are held fixed over the horizon. ``fit``
    only records the expected feature width.
    """

    def __init__(
        self,
        obs_len: int = 10,
        horizon: int = 60,
        ctx_dim: int = 1,
        ts: float = 0.01,
        method: str = "rk4",
    ):
        self.obs_len = obs_len
        self.horizon = horizon
        self.ctx_dim = ctx_dim
        self.ts = ts
        self.method = method

    def fit(self, X, y=None):
        check_features(X, self.obs_len, self.ctx_dim)
        self.n_features_in_ = self.obs_len * 4 + self.ctx_dim
        self.params_ = {}
        return self

    def predict(self, X) -> np.ndarray:
        check_fitted(self, "n_features_in_")
        obs, _ = check_features(X, self.obs_len, self.ctx_dim)
        cfg = dynamics.IntegratorConfig(method=self.method, ts=self.ts)
        out = np.empty((len(obs), self.horizon, 4))
        for i in range(len(obs)):
            window = obs[i]
            params = dynamics.estimate_turn_rate_and_speed(
                window[:, 2], window[:, 3], self.ts
            )
            state0 = dynamics.VehicleState(
                window[-1, 0], window[-1, 1], window[-1, 2], params.v
            )
            deriv = dynamics.make_ctrv_deriv(params)
            controls = [dynamics.ControlInput(0.0, 0.0)] * self.horizon
            out[i] = np.array(dynamics.rollout(state0, controls, deriv, cfg))
        return join_targets(out)

    def predict_trajectories(self, X) -> list:
        states = self.predict(X).reshape(-1, self.horizon, 4)
        return [PredictedTrajectory(states=s, source="ctrv") for s in states]

    def score(self, X, y) -> float:
        pred = self.predict(X).reshape(-1, self.horizon, 4)
        truth = check_targets(y, self.horizon)
        return -ade_metric(pred, truth)


def describe_intent(controls, delta_threshold: float = 0.02,
                    accel_threshold: float = 0.5) -> dict:
    """Read decoded controls as driving intent.

    In this east-north frame positive steering raises the heading, i.e.
    turns left (counterclockwise); positive acceleration means speeding up.
    Thresholds suppress labels for near-neutral control sequences.
    """
    controls = np.asarray(controls, dtype=np.float64)
    mean_delta = float(controls[:, 0].mean())
    mean_a = float(controls[:, 1].mean())
    if mean_delta > delta_threshold:
        turn = "left turn"
    elif mean_delta < -delta_threshold:
        turn = "right turn"
    else:
        turn = "straight"
    if mean_a > accel_threshold:
        speed = "accelerating"
    elif mean_a < -accel_threshold:
        speed = "braking"
    else:
        speed = "holding speed"
    return {"turn": turn, "speed": speed,
            "mean_delta": mean_delta, "mean_a": mean_a}


# -- checkpoint persistence ------------------------------------------------------

_HEAD_CLASSES = {"physics": PhysicsPredictor, "lstm": LstmPredictor}


def save_predictor(estimator, path) -> None:
    """Write a fitted neural head to a versioned JSON checkpoint.

    The optimizer velocity and epoch count ride along so training can resume
    deterministically.
    """
    check_fitted(estimator)
    head = {PhysicsPredictor: "physics", LstmPredictor: "lstm"}[type(estimator)]
    arrays = dict(estimator.params_)
    for name, arr in getattr(estimator, "velocity_", {}).items():
        arrays[f"opt.velocity.{name}"] = arr
    meta = {
        "head": head,
        "estimator_params": _jsonable_params(estimator.get_params()),
        "epochs_done": int(getattr(estimator, "epochs_done_", 0)),
    }
    save_checkpoint(path, arrays, meta)


def load_predictor(path):
    """Rebuild a fitted head from ``save_predictor`` output."""
    arrays, meta = load_checkpoint(path)
    cls = _HEAD_CLASSES[meta["head"]]
    kwargs = dict(meta["estimator_params"])
    if "loss_weights" in kwargs:
        kwargs["loss_weights"] = tuple(kwargs["loss_weights"])
    estimator = cls(**kwargs)
    estimator.params_ = {k: v for k, v in arrays.items() if not k.startswith("opt.velocity.")}
    estimator.velocity_ = {
        k[len("opt.velocity."):]: v for k, v in arrays.items() if k.startswith("opt.velocity.")
    }
    estimator.epochs_done_ = int(meta.get("epochs_done", 0))
    estimator.n_features_in_ = estimator.obs_len * 4 + estimator.ctx_dim
    return estimator


def resume_state(estimator) -> dict:
    """Bundle for ``fit(..., resume_from=...)`` from a fitted/loaded head."""
    check_fitted(estimator)
    return {
        "params": estimator.params_,
        "velocity": getattr(estimator, "velocity_", {}),
        "epochs_done": int(getattr(estimator, "epochs_done_", 0)),
    }


def _jsonable_params(params: dict) -> dict:
    out = {}
    for key, value in params.items():
        if isinstance(value, tuple):
            value = list(value)
        out[key] = value
    return out
