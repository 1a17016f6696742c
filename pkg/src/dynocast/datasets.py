"""CSV/JSON persistence for window datasets, predictions, and manifests."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .simkit import WindowSet
from .validation import STATE_DIM, join_features, join_targets

STATE_COLS = ("x", "y", "theta", "v")


def _obs_cols(obs_len: int) -> list:
    return [f"o{i}_{c}" for i in range(obs_len) for c in STATE_COLS]


def _fut_cols(horizon: int) -> list:
    return [f"f{i}_{c}" for i in range(horizon) for c in STATE_COLS]


def _ctx_cols(ctx_dim: int) -> list:
    return [f"ctx{k}" for k in range(ctx_dim)]


def save_windows_csv(path, samples: WindowSet) -> None:
    """One row per sample: stratum labels, flattened obs, context, flattened future."""
    obs_len = samples.obs.shape[1]
    horizon = samples.fut.shape[1]
    ctx_dim = samples.ctx.shape[1]
    header = (
        ["raceline", "controller", "speed"]
        + _obs_cols(obs_len)
        + _ctx_cols(ctx_dim)
        + _fut_cols(horizon)
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(samples)):
            raceline, controller, speed = samples.strata[i]
            numeric = np.concatenate(
                [samples.obs[i].ravel(), samples.ctx[i], samples.fut[i].ravel()]
            )
            writer.writerow([raceline, controller, repr(float(speed))]
                            + [repr(float(v)) for v in numeric])


def load_windows_csv(path, obs_len: int = 10, horizon: int = 60) -> WindowSet:
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path} is empty")
        rows = list(reader)
    n_obs = obs_len * STATE_DIM
    n_fut = horizon * STATE_DIM
    ctx_dim = len(header) - 3 - n_obs - n_fut
    if ctx_dim < 1:
        raise DataError(
            f"{path} columns do not match obs_len={obs_len}, horizon={horizon}"
        )
    if not rows:
        return WindowSet(
            np.empty((0, obs_len, STATE_DIM)),
            np.empty((0, ctx_dim)),
            np.empty((0, horizon, STATE_DIM)),
            [],
        )
    strata = [(r[0], r[1], float(r[2])) for r in rows]
    numeric = np.array([[float(v) for v in r[3:]] for r in rows])
    return WindowSet(
        obs=numeric[:, :n_obs].reshape(-1, obs_len, STATE_DIM),
        ctx=numeric[:, n_obs:n_obs + ctx_dim],
        fut=numeric[:, n_obs + ctx_dim:].reshape(-1, horizon, STATE_DIM),
        strata=strata,
    )


def features_and_targets(samples: WindowSet) -> tuple:
    """(X, y) matrices in the estimator layout."""
    return join_features(samples.obs, samples.ctx), join_targets(samples.fut)


def stratum_counts(samples: WindowSet) -> dict:
    counts: dict = {}
    for s in samples.strata:
        key = f"{s[0]}/{s[1]}/{s[2]:g}"
        counts[key] = counts.get(key, 0) + 1
    return dict(sorted(counts.items()))


def save_predictions_csv(path, states: np.ndarray, controls: np.ndarray | None = None) -> None:
    """Per-step rows: sample, step, x, y, theta, v [, delta, a]."""
    states = np.asarray(states, dtype=np.float64)
    header = ["sample", "step", "x", "y", "theta", "v"]
    if controls is not None:
        header += ["delta", "a"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(states.shape[0]):
            for t in range(states.shape[1]):
                row = [i, t + 1] + [repr(float(v)) for v in states[i, t]]
                if controls is not None:
                    row += [repr(float(v)) for v in controls[i, t]]
                writer.writerow(row)


def load_feature_csv(path, obs_len: int = 10) -> np.ndarray:
    """Read a windows-only CSV (obs columns + context) into an X matrix.

    Accepts either bare feature columns or a full dataset CSV, in which case
    the future columns are ignored.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"windows file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path} is empty")
        rows = list(reader)
    if not rows:
        raise DataError(f"{path} has no samples")
    skip = 3 if header[0] == "raceline" else 0
    n_obs = obs_len * STATE_DIM
    ctx_dim = sum(1 for name in header if name.startswith("ctx"))
    if ctx_dim == 0:
        raise DataError(f"{path} has no context columns (ctx0, ...)")
    numeric = np.array([[float(v) for v in r[skip:skip + n_obs + ctx_dim]] for r in rows])
    return numeric


# -- manifests -----------------------------------------------------------------


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(path, command: str, config: dict, seed, inputs: list, outputs: list,
                   timings: dict) -> None:
    """Record what a command did: config snapshot plus content hashes."""
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs},
        "timings_s": timings,
    }
    Path(path).write_text(json.dumps(manifest, indent=1, sort_keys=True))
