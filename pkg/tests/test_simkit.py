import math

import numpy as np
import pytest

from dynocast import dynamics
from dynocast.errors import DataError
from dynocast.simkit import (
    GenerationConfig,
    RaceLine,
    SimulationError,
    SplitSpec,
    WindowSet,
    generate_dataset,
    offset_raceline,
    pure_pursuit,
    race_raceline,
    simulate,
    speed_profile,
    split,
    standard_racelines,
    stanley,
    window,
)
from dynocast.track import circle_track, paperclip_track

L = 0.3302


@pytest.fixture(scope="module")
def track():
    return paperclip_track()


@pytest.fixture(scope="module")
def lines(track):
    return standard_racelines(track)


class TestRacelines:
    def test_offsets_stay_inside_track(self, track, lines):
        for label in ("center", "left", "right"):
            sd = track.to_frenet(lines[label].points)
            assert np.abs(sd[:, 1]).max() < 0.75 * 1.8

    def test_race_line_exceeds_offset_band(self, track, lines):
        sd = track.to_frenet(lines["race"].points)
        band = 0.3 * 1.8
        assert np.abs(sd[:, 1]).max() > band

    def test_race_line_faster_on_average(self, lines):
        assert lines["race"].speeds.mean() > lines["center"].speeds.mean()

    def test_speed_profile_slows_in_corners(self, track):
        v = speed_profile(track.points)
        kappa = np.abs(track.curvature)
        assert v[kappa > 0.2].mean() < v[kappa < 1e-6].mean()
        assert v.max() <= 5.0 + 1e-9


class TestControllers:
    def test_pure_pursuit_zero_on_straight(self, lines):
        line = lines["center"]
        # A pose on the first straight, aligned with the path.
        state = dynamics.VehicleState(4.0, 0.0, 0.0, 2.0)
        u = pure_pursuit(state, line, wheelbase=L)
        assert abs(u.delta) < 0.02

    def test_pure_pursuit_quarter_turn_geometry(self):
        # Goal 90 degrees to the left at exactly the lookahead distance:
        # alpha = pi/2 so delta = atan(2 L / lookahead).
        lookahead = 0.8
        pts = np.array([[0.0, 0.0], [0.0, lookahead], [-1.0, lookahead], [-1.0, 0.0]])
        line = RaceLine(pts, np.full(4, 2.0), "center")
        state = dynamics.VehicleState(0.0, 0.0, 0.0, 2.0)
        u = pure_pursuit(state, line, lookahead_m=lookahead, wheelbase=L)
        assert u.delta == pytest.approx(math.atan(2 * L / lookahead), rel=1e-6)

    def test_controls_respect_bounds(self, lines):
        rng = np.random.default_rng(0)
        bounds = dynamics.ControlBounds()
        for _ in range(100):
            state = dynamics.VehicleState(
                rng.uniform(-20, 15), rng.uniform(-5, 30), rng.uniform(-4, 4), rng.uniform(0, 6)
            )
            for fn in (pure_pursuit, stanley):
                u = fn(state, lines["center"], wheelbase=L)
                assert bounds.contains(u)

    def test_stanley_zero_error_zero_steering(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        line = RaceLine(pts, np.full(4, 2.0), "center")
        u = stanley(dynamics.VehicleState(0.0, 0.0, 0.0, 2.0), line)
        assert u.delta == pytest.approx(0.0, abs=1e-12)

    def test_stanley_cross_track_term(self):
        # Vehicle 1 m left of a straight path, aligned heading, v=1, k=1,
        # no softening: |delta| = atan(1) = pi/4 steering to the right.
        pts = np.array([[-5.0, 0.0], [0.0, 0.0], [5.0, 0.0], [10.0, 0.0]])
        line = RaceLine(pts, np.ones(4), "center")
        u = stanley(
            dynamics.VehicleState(0.0, 1.0, 0.0, 1.0), line, gain_k=1.0, softening=0.0,
        )
        assert u.delta == pytest.approx(-math.pi / 4, rel=1e-6)

    def test_stanley_low_speed_guard(self):
        pts = np.array([[-5.0, 0.0], [0.0, 0.0], [5.0, 0.0], [10.0, 0.0]])
        line = RaceLine(pts, np.ones(4), "center")
        u = stanley(dynamics.VehicleState(0.0, 0.5, 0.0, 0.0), line)
        assert np.isfinite(u.delta)


class TestSimulate:
    def test_circle_steady_state_radius(self):
        # Pure pursuit around a circular raceline settles near its radius.
        radius = 8.0
        track = circle_track(radius=radius, half_width=2.5)
        line = offset_raceline(track, 0.0, "center", speed_scale=0.75)
        trace = simulate(track, line, "pure_pursuit", duration=25.0, seed=1)
        tail = trace.states[-800:]
        center = np.array([0.0, radius])
        radii = np.hypot(tail[:, 0] - center[0], tail[:, 1] - center[1])
        assert abs(radii.mean() - radius) / radius < 0.02

    def test_trace_feasible_with_logged_controls(self, track, lines):
        trace = simulate(track, lines["center"], "stanley", duration=5.0, seed=2)
        deriv = dynamics.make_bicycle_deriv(dynamics.BicycleParams(L))
        cfg = dynamics.IntegratorConfig("rk4", trace.ts)
        states = [dynamics.VehicleState(*s) for s in trace.states]
        report = dynamics.is_feasible(states, deriv, cfg, dynamics.ControlBounds(),
                                      dynamics.BicycleParams(L))
        assert report.feasible
        assert np.abs(np.array(report.witnesses) - trace.controls).max() < 1e-9

    def test_identical_seed_identical_trace(self, track, lines):
        a = simulate(track, lines["left"], "pure_pursuit", duration=3.0, seed=9)
        b = simulate(track, lines["left"], "pure_pursuit", duration=3.0, seed=9)
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.controls, b.controls)

    def test_leaving_track_raises(self, track):
        # A "raceline" pointing straight off the track.
        pts = np.array([[0.0, 0.0], [50.0, 0.0], [100.0, 0.0], [150.0, 0.0]])
        runaway = RaceLine(pts, np.full(4, 5.0), "center")
        with pytest.raises(SimulationError):
            simulate(track, runaway, "pure_pursuit", duration=20.0, seed=0)


class TestWindow:
    def test_sample_count_floor(self, track, lines):
        trace = simulate(track, lines["center"], "pure_pursuit", duration=1.39, seed=0)
        ws = window(trace, track, obs_len=10, horizon=60, noise_sigma=0.0)
        assert len(ws) == 2  # floor(140 / 70)

    def test_zero_noise_preserves_trace_values(self, track, lines):
        trace = simulate(track, lines["center"], "pure_pursuit", duration=3.0, seed=0)
        ws = window(trace, track, noise_sigma=0.0)
        stride = 70
        for i in range(len(ws)):
            assert np.array_equal(ws.obs[i], trace.states[i * stride:i * stride + 10])

    def test_noise_only_on_observations(self, track, lines):
        trace = simulate(track, lines["center"], "pure_pursuit", duration=3.0, seed=0)
        noisy = window(trace, track, noise_sigma=0.1, seed=5)
        clean = window(trace, track, noise_sigma=0.0, seed=5)
        assert np.array_equal(noisy.fut, clean.fut)
        assert not np.array_equal(noisy.obs, clean.obs)
        assert np.array_equal(noisy.obs[:, :, 2], clean.obs[:, :, 2])  # theta clean
        assert np.array_equal(noisy.ctx, clean.ctx)

    def test_targets_continue_observations(self, track, lines):
        trace = simulate(track, lines["center"], "pure_pursuit", duration=3.0, seed=0)
        ws = window(trace, track, noise_sigma=0.0)
        deriv = dynamics.make_bicycle_deriv(dynamics.BicycleParams(L))
        cfg = dynamics.IntegratorConfig("rk4", trace.ts)
        stride = 70
        for i in range(len(ws)):
            last_obs = dynamics.VehicleState(*ws.obs[i, -1])
            logged = trace.controls[i * stride + 9]
            nxt = dynamics.step(last_obs, dynamics.ControlInput(*logged), deriv, cfg)
            assert np.allclose(np.array(nxt), ws.fut[i, 0], atol=1e-12)

    def test_short_trace_yields_zero_samples(self, track, lines):
        trace = simulate(track, lines["center"], "pure_pursuit", duration=0.5, seed=0)
        assert len(window(trace, track)) == 0


class TestSplit:
    def _toy_samples(self, n_per=100):
        parts = []
        for raceline in ("center", "race"):
            for controller in ("pure_pursuit", "stanley"):
                obs = np.zeros((n_per, 10, 4))
                fut = np.zeros((n_per, 60, 4))
                ctx = np.zeros((n_per, 1))
                parts.append(WindowSet(obs, ctx, fut, [(raceline, controller, 1.0)] * n_per))
        return WindowSet.concatenate(parts)

    def test_ratios_per_stratum(self):
        samples = self._toy_samples(100)
        train, val, test = split(samples, SplitSpec(0.8, 0.1, 0.1), seed=0)
        from collections import Counter

        for part, want in ((train, 80), (val, 10), (test, 10)):
            counts = Counter(part.strata)
            assert all(abs(c - want) <= 1 for c in counts.values())

    def test_partition_no_overlap(self):
        samples = self._toy_samples(50)
        samples.obs[:, 0, 0] = np.arange(len(samples))  # unique ids
        train, val, test = split(samples, SplitSpec(), seed=1)
        ids = np.concatenate([p.obs[:, 0, 0] for p in (train, val, test)])
        assert len(ids) == len(samples)
        assert len(np.unique(ids)) == len(samples)

    def test_fixed_seed_identical_split(self):
        samples = self._toy_samples(30)
        a = split(samples, SplitSpec(), seed=3)
        b = split(samples, SplitSpec(), seed=3)
        for x, y in zip(a, b):
            assert np.array_equal(x.obs, y.obs)

    def test_bad_ratios_rejected(self):
        with pytest.raises(DataError):
            SplitSpec(0.8, 0.1, 0.2)


class TestGeneration:
    def test_expected_counts_match_paper_scale(self):
        # A config scaled to the published dataset totals: 24 cells whose
        # durations are set by a fixed lap count reproduce the 8:1:1 split
        # totals within per-stratum rounding.
        cfg = GenerationConfig(base_duration=1082.0)
        per_cell = [cfg.expected_cell_samples(sc) for _, _, sc in cfg.cells()]
        total = sum(per_cell)
        train = sum(round(0.8 * c) for c in per_cell)
        val = sum(round(0.1 * c) for c in per_cell)
        assert total == pytest.approx(34686 + 4336 + 4336, rel=0.03)
        assert train / total == pytest.approx(0.8, abs=0.01)
        assert val / total == pytest.approx(0.1, abs=0.01)

    def test_generate_dataset_deterministic(self):
        cfg = GenerationConfig(base_duration=8.0)
        a_train, _, _ = generate_dataset(cfg, seed=4)
        b_train, _, _ = generate_dataset(cfg, seed=4)
        assert np.array_equal(a_train.obs, b_train.obs)

    def test_generated_windows_are_feasible(self):
        cfg = GenerationConfig(base_duration=8.0, noise_sigma=0.0)
        train, _, _ = generate_dataset(cfg, seed=5)
        deriv = dynamics.make_bicycle_deriv(dynamics.BicycleParams(L))
        icfg = dynamics.IntegratorConfig("rk4", 0.01)
        bounds = dynamics.ControlBounds()
        for i in range(0, len(train), max(1, len(train) // 10)):
            states = [dynamics.VehicleState(*s) for s in train.fut[i]]
            assert dynamics.is_feasible(states, deriv, icfg, bounds,
                                        dynamics.BicycleParams(L)).feasible


def test_trace_csv_round_trip(track, lines):
    import tempfile, os
    from dynocast.simkit import save_trace_csv, load_trace_csv

    trace = simulate(track, lines["center"], "pure_pursuit", duration=1.0, seed=6)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "trace.csv")
        save_trace_csv(path, trace)
        loaded = load_trace_csv(path)
        assert np.array_equal(loaded.states, trace.states)
        assert np.array_equal(loaded.controls, trace.controls)
        assert loaded.ts == trace.ts
        assert loaded.metadata["raceline"] == "center"
