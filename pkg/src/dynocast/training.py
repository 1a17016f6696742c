"""Loss functions, SGD with momentum, and the shared minibatch loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .autodiff import Tape
from .errors import TrainingDivergedError

DEFAULT_LOSS_WEIGHTS = (1.0, 1.0, 4.0, 0.0)


def weighted_l1_loss(truth, pred, weights=DEFAULT_LOSS_WEIGHTS) -> float:
    """Mean over horizon of the weighted absolute per-channel errors.

    Per step the channel errors are scaled by ``weights`` and summed; the
    horizon mean of those sums is returned. Velocity is ignored under the
    default weights.
    """
    t = np.asarray(truth, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {p.shape}")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0.0):
        raise ValueError("loss weights must be nonnegative")
    return float((np.abs(t - p) * w).sum(axis=-1).mean(axis=-1).mean())


def curriculum_loss(truth, pred, weights, h: int) -> float:
    """Weighted L1 over only the first ``h`` horizon steps."""
    t = np.asarray(truth, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    n = t.shape[-2]
    if not 1 <= h <= n:
        raise ValueError(f"h must be in [1, {n}], got {h}")
    return weighted_l1_loss(t[..., :h, :], p[..., :h, :], weights)


@dataclass(frozen=True)
class CurriculumSchedule:
    """Increasing-horizon schedule: h starts at ``h0`` and grows by one every
    ``epochs_per_increment`` epochs, capped at the prediction horizon."""

    h0: int = 1
    epochs_per_increment: int = 2

    def __post_init__(self):
        if self.h0 < 1 or self.epochs_per_increment < 1:
            raise ValueError("curriculum parameters must be >= 1")

    def horizon_at(self, epoch: int, h_max: int) -> int:
        return min(h_max, self.h0 + epoch // self.epochs_per_increment)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 350
    lr: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 64
    seed: int = 0
    clip_grad: Optional[float] = None
    lr_schedule: str = "cosine"

    def __post_init__(self):
        if self.epochs < 1 or self.lr < 0.0 or self.batch_size < 1:
            raise ValueError("epochs/batch_size must be >= 1 and lr >= 0")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")

    def lr_at(self, epoch: int) -> float:
        """Cosine decay to 1% of the base rate; L1 losses stall without it."""
        if self.lr_schedule == "constant" or self.epochs <= 1:
            return self.lr
        frac = epoch / (self.epochs - 1)
        return self.lr * (0.01 + 0.99 * 0.5 * (1.0 + math.cos(math.pi * frac)))


class SgdMomentum:
    """Plain SGD with classical momentum over a flat parameter dict."""

    def __init__(self, lr: float, momentum: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self._velocity: dict = {}

    def update(self, params: dict, grads: dict) -> None:
        for name, g in grads.items():
            v = self._velocity.get(name)
            v = g if v is None else self.momentum * v + g
            self._velocity[name] = v
            params[name] = params[name] - self.lr * v


def clip_gradients(grads: dict, max_norm: float) -> dict:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm > 0.0:
        factor = max_norm / total
        return {k: g * factor for k, g in grads.items()}
    return grads


def tape_weighted_l1(tape: Tape, step_nodes: list, targets: np.ndarray,
                     weights, h: int) -> int:
    """Record the curriculum-weighted L1 loss of ``step_nodes`` on the tape.

    ``step_nodes[j]`` is a tuple of per-channel (B, 1) node ids for horizon
    step j; ``targets`` is (B, n, C). Channels with zero weight are skipped.
    Returns the scalar loss node (mean over batch and the first h steps).
    """
    batch = targets.shape[0]
    acc = None
    for j in range(h):
        for c, w in enumerate(weights):
            if w == 0.0:
                continue
            err = tape.absolute(tape.sub(step_nodes[j][c], tape.leaf(targets[:, j, c:c + 1])))
            term = tape.scale(err, float(w)) if w != 1.0 else err
            acc = term if acc is None else tape.add(acc, term)
    if acc is None:
        raise ValueError("all loss weights are zero")
    return tape.scale(tape.sum_all(acc), 1.0 / (h * batch))


@dataclass
class EpochRecord:
    epoch: int
    h: int
    train_loss: float
    val_ade: float = math.nan
    val_fde: float = math.nan
    val_iou: float = math.nan


@dataclass
class TrainResult:
    params: dict
    log: list = field(default_factory=list)
    velocity: dict = field(default_factory=dict)
    epochs_done: int = 0

    @property
    def loss_trace(self) -> list:
        return [rec.train_loss for rec in self.log]


def run_training(
    params: dict,
    build_minibatch_loss: Callable,
    n_samples: int,
    horizon: int,
    cfg: TrainConfig,
    schedule: Optional[CurriculumSchedule] = None,
    validate: Optional[Callable] = None,
    val_every: int = 25,
    rng: Optional[np.random.Generator] = None,
    start_epoch: int = 0,
    velocity: Optional[dict] = None,
) -> TrainResult:
    """Generic minibatch SGD loop shared by the neural heads.

    ``build_minibatch_loss(tape, param_ids, indices, h)`` must record the
    forward pass for the given sample indices and return the scalar loss node.
    ``validate(params)`` (optional) returns an (ade, fde, iou) tuple.

    Resuming: with ``start_epoch`` and the saved optimizer ``velocity``, the
    loop fast-forwards the shuffle stream and continues the exact trace an
    uninterrupted run would have produced.

    Raises ``TrainingDivergedError`` carrying the last end-of-epoch snapshot
    if the loss goes non-finite.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    optimizer = SgdMomentum(cfg.lr, cfg.momentum)
    if velocity:
        optimizer._velocity = {k: v.copy() for k, v in velocity.items()}
    names = sorted(params)
    snapshot = {k: v.copy() for k, v in params.items()}
    log: list = []
    for _ in range(start_epoch):
        rng.permutation(n_samples)

    for epoch in range(start_epoch, cfg.epochs):
        h = schedule.horizon_at(epoch, horizon) if schedule is not None else horizon
        optimizer.lr = cfg.lr_at(epoch)
        order = rng.permutation(n_samples)
        epoch_loss = 0.0
        for lo in range(0, n_samples, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            tape = Tape()
            param_ids = {name: tape.leaf(params[name]) for name in names}
            loss_node = build_minibatch_loss(tape, param_ids, idx, h)
            loss_val = float(tape.value(loss_node))
            if not math.isfinite(loss_val):
                raise TrainingDivergedError(
                    f"training loss became non-finite at epoch {epoch}",
                    last_good_params=snapshot,
                    epoch=epoch,
                )
            epoch_loss += loss_val * len(idx)  # sample-weighted epoch mean
            if cfg.lr == 0.0:
                continue
            grad_list = tape.grad(loss_node, [param_ids[name] for name in names])
            grads = dict(zip(names, grad_list))
            if cfg.clip_grad is not None:
                grads = clip_gradients(grads, cfg.clip_grad)
            optimizer.update(params, grads)

        record = EpochRecord(epoch=epoch, h=h, train_loss=epoch_loss / max(n_samples, 1))
        if validate is not None and (epoch % val_every == 0 or epoch == cfg.epochs - 1):
            record.val_ade, record.val_fde, record.val_iou = validate(params)
        log.append(record)
        snapshot = {k: v.copy() for k, v in params.items()}

    return TrainResult(
        params=params,
        log=log,
        velocity=dict(optimizer._velocity),
        epochs_done=cfg.epochs,
    )
