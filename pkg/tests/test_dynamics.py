import math

import numpy as np
import pytest

from dynocast import dynamics
from dynocast.dynamics import (
    BicycleParams,
    ControlBounds,
    ControlInput,
    CtrvParams,
    IntegratorConfig,
    VehicleState,
    bicycle_deriv,
    ctrv_deriv,
    estimate_turn_rate_and_speed,
    is_feasible,
    make_bicycle_deriv,
    make_ctrv_deriv,
    rollout,
    step,
)
from dynocast.errors import SteeringSingularityError

from _oracles import bicycle_circle_exact, fine_euler_bicycle

L = 0.3302
PARAMS = BicycleParams(L)
DERIV = make_bicycle_deriv(PARAMS)
BOUNDS = ControlBounds()


class TestBicycleDeriv:
    def test_straight_line(self):
        d = bicycle_deriv(VehicleState(0, 0, 0, 1.0), ControlInput(0, 0), PARAMS)
        assert d == pytest.approx((1.1651, 0.0, 0.0, 0.0), abs=1e-12)

    def test_heading_north(self):
        d = bicycle_deriv(VehicleState(0, 0, math.pi / 2, 1.0), ControlInput(0, 0), PARAMS)
        assert d[0] == pytest.approx(0.0, abs=1e-12)
        assert d[1] == pytest.approx(1.1651, abs=1e-12)

    def test_quarter_pi_steering(self):
        # Independent scalar evaluation of tan(pi/4)/L.
        d = bicycle_deriv(VehicleState(0, 0, 0, 1.0), ControlInput(math.pi / 4, 0), PARAMS)
        assert d[2] == pytest.approx(math.tan(math.pi / 4) / L, rel=1e-12)
        assert d[2] == pytest.approx(3.028467595396729, rel=1e-12)

    def test_singularity_rejected(self):
        with pytest.raises(SteeringSingularityError):
            bicycle_deriv(VehicleState(0, 0, 0, 1.0), ControlInput(math.pi / 2, 0), PARAMS)


class TestCtrvDeriv:
    def test_straight(self):
        d = ctrv_deriv(VehicleState(0, 0, 0, 2.0), CtrvParams(omega=0.0, v=2.0))
        assert d == pytest.approx((2.0, 0.0, 0.0, 0.0))

    def test_reversed_heading(self):
        d = ctrv_deriv(VehicleState(0, 0, math.pi, 1.0), CtrvParams(omega=0.5, v=1.0))
        assert d == pytest.approx((-1.0, 0.0, 0.5, 0.0), abs=1e-12)

    def test_turn_rate_estimate_finite_difference(self):
        # Two headings 0.0 -> 0.1 over ts=0.01 define slope 10.
        params = estimate_turn_rate_and_speed([0.0, 0.1], [1.0, 1.0], ts=0.01)
        assert params.omega == pytest.approx(10.0, rel=1e-12)
        assert params.v == 1.0


class TestStep:
    def test_straight_line_euler_rk4_agree(self):
        state = VehicleState(0, 0, 0, 1.0)
        u = ControlInput(0, 0)
        for method in ("euler", "rk4"):
            nxt = step(state, u, DERIV, IntegratorConfig(method, 0.01))
            assert nxt.x == pytest.approx(0.011651, abs=1e-15)
            assert (nxt.y, nxt.theta, nxt.v) == (0.0, 0.0, 1.0)

    def test_turning_step_against_oracles(self):
        state = VehicleState(0, 0, 0, 1.0)
        nxt = step(state, ControlInput(0.2, 0), DERIV, IntegratorConfig("rk4", 0.1))
        exact = bicycle_circle_exact((0, 0, 0, 1.0), 0.2, L, 0.1)
        for got, want in zip(nxt, exact):
            assert got == pytest.approx(want, abs=1e-8)
        # The fine-Euler oracle carries ~4e-8 of its own error at h=1e-6, so
        # the comparison is held at 1e-7.
        oracle = fine_euler_bicycle((0, 0, 0, 1.0), 0.2, 0.0, L, 0.1, h=1e-6)
        for got, want in zip(nxt, oracle):
            assert got == pytest.approx(want, abs=1e-7)

    def test_zero_ts_rejected(self):
        with pytest.raises(ValueError):
            IntegratorConfig("euler", 0.0)

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError):
            IntegratorConfig("rk2", 0.01)


class TestRollout:
    def test_straight_line_closed_form(self):
        cfg = IntegratorConfig("rk4", 0.01)
        traj = rollout(VehicleState(0, 0, 0, 1.0), [ControlInput(0, 0)] * 60, DERIV, cfg)
        xs = [s.x for s in traj]
        assert all(b > a for a, b in zip(xs, xs[1:]))
        assert xs[-1] == pytest.approx(60 * 0.01 * 1.1651, rel=1e-12)
        assert all(s.y == 0 and s.theta == 0 for s in traj)

    def test_rollout_matches_fine_euler(self):
        cfg = IntegratorConfig("rk4", 0.01)
        traj = rollout(VehicleState(0, 0, 0, 1.0), [ControlInput(0.1, 0)] * 60, DERIV, cfg)
        ade = 0.0
        for k, s in enumerate(traj, start=1):
            o = fine_euler_bicycle((0, 0, 0, 1.0), 0.1, 0.0, L, 0.01 * k, h=1e-5)
            ade += math.hypot(s.x - o[0], s.y - o[1])
        assert ade / len(traj) <= 1e-6

    def test_rollout_feasible_by_construction(self):
        cfg = IntegratorConfig("rk4", 0.01)
        controls = [ControlInput(0.3 * math.sin(k / 7), 2.0 * math.cos(k / 11)) for k in range(60)]
        traj = rollout(VehicleState(1, 2, 0.5, 2.0), controls, DERIV, cfg)
        report = is_feasible([VehicleState(1, 2, 0.5, 2.0)] + traj, DERIV, cfg, BOUNDS, PARAMS)
        assert report.feasible
        recovered = np.array(report.witnesses)
        assert np.abs(recovered - np.array(controls)).max() < 1e-6

    def test_empty_controls_rejected(self):
        with pytest.raises(ValueError):
            rollout(VehicleState(0, 0, 0, 1.0), [], DERIV, IntegratorConfig("rk4", 0.01))


class TestFeasibility:
    def setup_method(self):
        self.cfg = IntegratorConfig("rk4", 0.01)

    def test_teleport_is_infeasible(self):
        a = VehicleState(0, 0, 0, 1.0)
        b = VehicleState(10.0, 0, 0, 1.0)  # 10 m in 0.01 s at v=1
        report = is_feasible([a, b], DERIV, self.cfg, BOUNDS, PARAMS)
        assert not report.feasible
        assert report.violation_index == 0

    def test_zero_speed_heading_change_reported(self):
        a = VehicleState(0, 0, 0, 0.0)
        b = VehicleState(0, 0, 0.3, 0.0)
        report = is_feasible([a, b], DERIV, self.cfg, BOUNDS, PARAMS)
        assert not report.feasible
        assert "zero speed" in report.violation_reason or "unreachable" in report.violation_reason

    def test_out_of_bounds_witness_rejected(self):
        cfg = IntegratorConfig("euler", 0.01)
        start = VehicleState(0, 0, 0, 2.0)
        hot = ControlInput(0.0, 50.0)  # beyond a_max
        nxt = step(start, hot, DERIV, cfg)
        report = is_feasible([start, nxt], DERIV, cfg, BOUNDS, PARAMS)
        assert not report.feasible
        assert "outside bounds" in report.violation_reason

    def test_euler_witnesses(self):
        cfg = IntegratorConfig("euler", 0.01)
        controls = [ControlInput(-0.2, 1.0)] * 20
        start = VehicleState(0, 0, 1.0, 1.5)
        traj = rollout(start, controls, DERIV, cfg)
        report = is_feasible([start] + traj, DERIV, cfg, BOUNDS, PARAMS)
        assert report.feasible
        assert np.abs(np.array(report.witnesses) - np.array(controls)).max() < 1e-9

    def test_short_trajectory_rejected(self):
        with pytest.raises(ValueError):
            is_feasible([VehicleState(0, 0, 0, 1.0)], DERIV, self.cfg, BOUNDS, PARAMS)


class TestIntegratorOrder:
    def endpoint_error(self, method, ts, delta=0.3, v=2.0, duration=2.0):
        cfg = IntegratorConfig(method, ts)
        n = int(round(duration / ts))
        traj = rollout(VehicleState(0, 0, 0, v), [ControlInput(delta, 0.0)] * n, DERIV, cfg)
        exact = bicycle_circle_exact((0, 0, 0, v), delta, L, duration)
        return math.sqrt(sum((a - b) ** 2 for a, b in zip(traj[-1], exact)))

    def test_rk4_fourth_order(self):
        ratio = self.endpoint_error("rk4", 0.1) / self.endpoint_error("rk4", 0.05)
        assert 12.0 <= ratio <= 20.0

    def test_euler_first_order(self):
        ratio = self.endpoint_error("euler", 0.1) / self.endpoint_error("euler", 0.05)
        assert 1.8 <= ratio <= 2.2


class TestEquivariance:
    def _rollout(self, state0):
        cfg = IntegratorConfig("rk4", 0.01)
        controls = [ControlInput(0.25 * math.sin(k / 9), math.cos(k / 5)) for k in range(40)]
        return np.array(rollout(state0, controls, DERIV, cfg))

    def test_rotation_equivariance(self):
        base = self._rollout(VehicleState(0.3, -0.2, 0.4, 2.0))
        for phi in (0.7, -2.1, 3.0):
            c, s = math.cos(phi), math.sin(phi)
            x0 = 0.3 * c - (-0.2) * s
            y0 = 0.3 * s + (-0.2) * c
            rotated = self._rollout(VehicleState(x0, y0, 0.4 + phi, 2.0))
            back = np.empty_like(rotated)
            back[:, 0] = rotated[:, 0] * c + rotated[:, 1] * s
            back[:, 1] = -rotated[:, 0] * s + rotated[:, 1] * c
            back[:, 2] = rotated[:, 2] - phi
            back[:, 3] = rotated[:, 3]
            assert np.abs(back - base).max() < 1e-9

    def test_translation_equivariance(self):
        base = self._rollout(VehicleState(0, 0, 0.4, 2.0))
        moved = self._rollout(VehicleState(5.0, -3.0, 0.4, 2.0))
        assert np.abs(moved[:, 0] - base[:, 0] - 5.0).max() < 1e-9
        assert np.abs(moved[:, 1] - base[:, 1] + 3.0).max() < 1e-9
        assert np.abs(moved[:, 2:] - base[:, 2:]).max() == 0.0


class TestWheelbaseReachability:
    """Shrinking the wheelbase never demands a larger steering witness.

    The positional channels cannot transfer exactly between wheelbases: the
    mid-axle reference adds L/2 to the forward speed, so a transition
    generated under L differs from any L/N-reachable one by up to
    ts*(L - L/N)/2 per step in position. The steering/speed channels do
    transfer, which is the substance of the smaller-wheelbase argument.
    """

    def test_witness_steering_shrinks(self):
        cfg = IntegratorConfig("euler", 0.01)
        start = VehicleState(0, 0, 0.2, 2.0)
        controls = [ControlInput(0.5, 1.0)] * 10
        traj = [start] + rollout(start, controls, DERIV, cfg)
        for n_div in (2.0, 4.0, 10.0):
            small = BicycleParams(L / n_div)
            small_deriv = make_bicycle_deriv(small)
            slack = cfg.ts * (L - L / n_div) / 2.0 + 1e-6
            report = is_feasible(traj, small_deriv, cfg, BOUNDS, small, tol_feas=slack)
            assert report.feasible
            for witness, original in zip(report.witnesses, controls):
                assert abs(witness.delta) <= abs(original.delta)
                assert abs(witness.a - original.a) < 1e-9


def test_ctrv_rollout_matches_circle():
    params = CtrvParams(omega=0.7, v=2.0)
    deriv = make_ctrv_deriv(params)
    cfg = IntegratorConfig("rk4", 0.01)
    start = VehicleState(1.0, -2.0, 0.3, 2.0)
    traj = rollout(start, [ControlInput(0, 0)] * 60, deriv, cfg)
    from _oracles import ctrv_circle_exact

    for k, s in enumerate(traj, start=1):
        want = ctrv_circle_exact((1.0, -2.0, 0.3, 2.0), 0.7, 0.01 * k)
        for got, expected in zip(s, want):
            assert got == pytest.approx(expected, abs=1e-9)


def test_turn_rate_least_squares_matches_polyfit():
    rng = np.random.default_rng(3)
    thetas = 0.4 + 2.0 * np.arange(10) * 0.01 + rng.normal(0, 0.01, 10)
    speeds = rng.uniform(1, 3, 10)
    params = estimate_turn_rate_and_speed(thetas, speeds, 0.01)
    from _oracles import lstsq_slope

    assert params.omega == pytest.approx(lstsq_slope(thetas, 0.01), rel=1e-9)
    assert params.v == pytest.approx(float(speeds.mean()), rel=1e-12)


def test_turn_rate_monte_carlo_within_3_sigma():
    # LS slope of theta with i.i.d. noise sigma has std sigma*sqrt(12/(l(l^2-1)))/ts.
    rng = np.random.default_rng(11)
    l, ts, sigma, omega_true = 10, 0.01, 0.01, 2.0
    sigma_omega = sigma * math.sqrt(12.0 / (l * (l * l - 1))) / ts
    estimates = []
    for _ in range(1000):
        thetas = omega_true * np.arange(l) * ts + rng.normal(0, sigma, l)
        estimates.append(estimate_turn_rate_and_speed(thetas, np.ones(l), ts).omega)
    estimates = np.array(estimates)
    assert abs(estimates.mean() - omega_true) < 3.0 * sigma_omega / math.sqrt(1000)
    assert np.mean(np.abs(estimates - omega_true) < 3.0 * sigma_omega) > 0.99
