import json

import numpy as np
import pytest

from dynocast.datasets import (
    features_and_targets,
    load_feature_csv,
    load_windows_csv,
    save_predictions_csv,
    save_windows_csv,
    sha256_file,
    stratum_counts,
    write_manifest,
)
from dynocast.errors import DataError
from dynocast.simkit import WindowSet


@pytest.fixture
def samples():
    rng = np.random.default_rng(0)
    n = 12
    return WindowSet(
        obs=rng.normal(size=(n, 10, 4)),
        ctx=rng.normal(size=(n, 1)),
        fut=rng.normal(size=(n, 60, 4)),
        strata=[("center", "pure_pursuit", 0.75)] * 6 + [("race", "stanley", 1.0)] * 6,
    )


def test_windows_csv_round_trip_exact(tmp_path, samples):
    path = tmp_path / "train.csv"
    save_windows_csv(path, samples)
    loaded = load_windows_csv(path)
    assert np.array_equal(loaded.obs, samples.obs)
    assert np.array_equal(loaded.ctx, samples.ctx)
    assert np.array_equal(loaded.fut, samples.fut)
    assert loaded.strata == samples.strata


def test_feature_target_layout(samples):
    X, y = features_and_targets(samples)
    assert X.shape == (12, 41)
    assert y.shape == (12, 240)
    assert np.array_equal(X[:, :40], samples.obs.reshape(12, -1))
    assert np.array_equal(X[:, 40:], samples.ctx)
    assert np.array_equal(y, samples.fut.reshape(12, -1))


def test_stratum_counts(samples):
    counts = stratum_counts(samples)
    assert counts == {"center/pure_pursuit/0.75": 6, "race/stanley/1": 6}


def test_load_missing_file_raises(tmp_path):
    with pytest.raises(DataError):
        load_windows_csv(tmp_path / "nope.csv")


def test_feature_csv_accepts_full_dataset(tmp_path, samples):
    path = tmp_path / "test.csv"
    save_windows_csv(path, samples)
    X = load_feature_csv(path)
    want, _ = features_and_targets(samples)
    assert np.array_equal(X, want)


def test_predictions_csv_layout(tmp_path):
    states = np.arange(2 * 3 * 4, dtype=float).reshape(2, 3, 4)
    controls = np.arange(2 * 3 * 2, dtype=float).reshape(2, 3, 2)
    path = tmp_path / "preds.csv"
    save_predictions_csv(path, states, controls)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "sample,step,x,y,theta,v,delta,a"
    assert len(lines) == 1 + 6
    first = lines[1].split(",")
    assert first[:2] == ["0", "1"]
    assert float(first[2]) == 0.0


def test_manifest_hashes_inputs_and_outputs(tmp_path):
    src = tmp_path / "a.txt"
    src.write_text("hello")
    out = tmp_path / "b.txt"
    out.write_text("world")
    manifest_path = tmp_path / "manifest.json"
    write_manifest(manifest_path, "test-cmd", {"k": 1}, 7, [src], [out], {"t": 0.5})
    manifest = json.loads(manifest_path.read_text())
    assert manifest["command"] == "test-cmd"
    assert manifest["seed"] == 7
    assert manifest["inputs"][str(src)] == sha256_file(src)
    assert manifest["outputs"][str(out)] == sha256_file(out)


def test_sha256_stable(tmp_path):
    f = tmp_path / "x.bin"
    f.write_bytes(b"\x00\x01\x02")
    assert sha256_file(f) == sha256_file(f)


def test_public_api_exports_resolve():
    import dynocast

    for name in dynocast.__all__:
        assert getattr(dynocast, name) is not None
