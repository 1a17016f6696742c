"""Input validation helpers for the estimator API.

Feature matrices follow the dataset row layout: the flattened observation
window (step-major x, y, theta, v) followed by the context column(s).
Target matrices are flattened future windows in the same step-major order.
"""

from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError

STATE_DIM = 4


def as_float_matrix(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_features(X, obs_len: int, ctx_dim: int) -> tuple:
    """Validate and split X into (obs (N, l, 4), ctx (N, ctx_dim))."""
    X = as_float_matrix(X, "X")
    expected = obs_len * STATE_DIM + ctx_dim
    if X.shape[1] != expected:
        raise ValueError(
            f"X has {X.shape[1]} columns, expected {expected} "
            f"({obs_len} states x {STATE_DIM} + {ctx_dim} context)"
        )
    obs = X[:, : obs_len * STATE_DIM].reshape(-1, obs_len, STATE_DIM)
    ctx = X[:, obs_len * STATE_DIM:]
    return obs, ctx


def check_targets(y, horizon: int, n_rows: int | None = None) -> np.ndarray:
    """Validate and reshape y into futures (N, horizon, 4)."""
    y = as_float_matrix(y, "y")
    if y.shape[1] != horizon * STATE_DIM:
        raise ValueError(
            f"y has {y.shape[1]} columns, expected {horizon * STATE_DIM}"
        )
    if n_rows is not None and y.shape[0] != n_rows:
        raise ValueError(f"X and y row counts differ: {n_rows} vs {y.shape[0]}")
    return y.reshape(-1, horizon, STATE_DIM)


def join_features(obs: np.ndarray, ctx: np.ndarray) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    ctx = np.asarray(ctx, dtype=np.float64)
    if ctx.ndim == 1:
        ctx = ctx[:, None]
    return np.concatenate([obs.reshape(len(obs), -1), ctx], axis=1)


def join_targets(fut: np.ndarray) -> np.ndarray:
    fut = np.asarray(fut, dtype=np.float64)
    return fut.reshape(len(fut), -1)


def check_fitted(estimator, attribute: str = "params_") -> None:
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )
