import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from eregsim.control import (
    Actuator,
    EregController,
    FeedforwardParams,
    PidController,
    PidGains,
    RampSchedule,
    dynamic_gains,
    ff_injector,
    ff_tank,
)
from eregsim.errors import ControllerError
from eregsim.fluids import ValveModel

GAS_VALVE = ValveModel(alpha=9.375e-8, theta_zero=10.0, rated_pressure=415e5,
                       choked_constant=1.6774194e-3)
LIQ_VALVE = ValveModel(alpha=4.0e-6, theta_zero=10.0, rated_pressure=78e5)


def make_pid(kp=1.0, ki=0.0, kd=0.0, out=(-100.0, 100.0), integral=(-50.0, 50.0)):
    return PidController(PidGains(kp, ki, kd), out, integral)


class TestPid:
    def test_zero_error_zero_output(self):
        pid = make_pid(kp=2.0, ki=1.0, kd=0.5)
        for _ in range(20):
            assert pid.step(5.0, 5.0, 0.01) == 0.0

    def test_pure_proportional(self):
        pid = make_pid(kp=3.0)
        assert pid.step(2.0, 0.0, 0.01) == pytest.approx(6.0, rel=1e-12)

    def test_rectangular_integration(self):
        pid = make_pid(kp=0.0, ki=0.7)
        n, dt, e = 250, 0.01, 1.3
        out = 0.0
        for _ in range(n):
            out = pid.step(e, 0.0, dt)
        assert out == pytest.approx(0.7 * e * n * dt, rel=1e-12)

    def test_non_finite_input_is_fatal(self):
        pid = make_pid()
        with pytest.raises(ControllerError):
            pid.step(math.nan, 0.0, 0.01)
        with pytest.raises(ControllerError):
            pid.step(0.0, math.inf, 0.01)

    def test_anti_windup_freezes_integral_when_saturated(self):
        pid = make_pid(kp=1.0, ki=10.0, out=(-1.0, 1.0))
        previous = pid.integral
        for _ in range(50):
            pid.step(100.0, 0.0, 0.01)  # output pinned at +1, error positive
            assert pid.integral <= previous + 1e-15
            previous = pid.integral

    def test_integral_respects_limits(self):
        pid = make_pid(kp=0.0, ki=10.0, out=(-1e9, 1e9), integral=(-0.5, 0.5))
        for _ in range(1000):
            pid.step(10.0, 0.0, 0.01)
        assert pid.integral == pytest.approx(0.5)

    def test_setpoint_step_causes_no_derivative_kick(self):
        pid = make_pid(kp=0.0, ki=0.0, kd=100.0)
        pid.step(0.0, 3.0, 0.01)
        out = pid.step(1000.0, 3.0, 0.01)  # setpoint jumps, measurement still
        assert out == 0.0

    def test_derivative_opposes_rising_measurement(self):
        pid = make_pid(kp=0.0, ki=0.0, kd=1.0)
        pid.step(0.0, 0.0, 0.01)
        out = pid.step(0.0, 1.0, 0.01)
        assert out < 0.0


class TestDynamicGains:
    BASE = PidGains(4.0, 6.0, 0.1)
    RAMP = RampSchedule(2.0)

    def test_zero_at_start(self):
        g = dynamic_gains(self.BASE, 0.0, self.RAMP)
        assert (g.kp, g.ki, g.kd) == (0.0, 0.0, 0.0)

    def test_saturates_at_base(self):
        for t in (2.0, 5.0, 100.0):
            g = dynamic_gains(self.BASE, t, self.RAMP)
            assert (g.kp, g.ki, g.kd) == (4.0, 6.0, 0.1)

    def test_half_at_half_ramp(self):
        g = dynamic_gains(self.BASE, 1.0, self.RAMP)
        assert g.kp == pytest.approx(2.0)
        assert g.ki == pytest.approx(3.0)
        assert g.kd == pytest.approx(0.05)

    @given(st.floats(0.0, 2.0), st.floats(0.0, 2.0))
    def test_exactly_linear_on_ramp(self, a, b):
        ga = dynamic_gains(self.BASE, a, self.RAMP)
        gb = dynamic_gains(self.BASE, b, self.RAMP)
        assert ga.kp * b == pytest.approx(gb.kp * a, abs=1e-9)


class TestFeedforwardTank:
    FF = FeedforwardParams(gamma=60.0, alpha=GAS_VALVE.alpha, theta_zero=10.0)

    def test_saturated_ratio(self):
        assert ff_tank(self.FF, 42e5, 42e5) == 70.0
        assert ff_tank(self.FF, 50e5, 42e5) == 70.0

    def test_half_ratio(self):
        assert ff_tank(self.FF, 21e5, 42e5) == pytest.approx(40.0, rel=1e-12)

    def test_hand_evaluated_point(self):
        assert ff_tank(self.FF, 42e5, 310e5) == pytest.approx(18.129032258, rel=1e-9)

    @given(st.floats(1e5, 5e7), st.floats(1e5, 5e7), st.floats(0.5, 20.0))
    def test_scale_invariance(self, s, p, scale):
        assert ff_tank(self.FF, s * scale, p * scale) == pytest.approx(
            ff_tank(self.FF, s, p), rel=1e-9
        )

    def test_clamped_to_travel(self):
        wide = FeedforwardParams(gamma=200.0, theta_zero=10.0)
        assert ff_tank(wide, 42e5, 42e5) == 90.0


class TestFeedforwardInjector:
    FF = FeedforwardParams(
        nominal_flow=1.0e-3, fluid_density=1141.0, alpha=4.0e-6, theta_zero=10.0, min_drop=1e4
    )

    def test_large_drop_approaches_dead_band(self):
        assert ff_injector(self.FF, 1e9, 1e5) == pytest.approx(10.0, abs=0.5)

    def test_singular_branch_goes_fully_open(self):
        assert ff_injector(self.FF, 42e5, 42e5) == 90.0
        assert ff_injector(self.FF, 42e5, 41.95e5) == 90.0  # drop below the floor

    def test_hand_evaluated_point(self):
        assert ff_injector(self.FF, 42e5, 35e5) == pytest.approx(20.0933, rel=1e-4)


class TestActuator:
    def test_no_command_from_rest(self):
        act = Actuator(time_constant=0.02, rate_max=180.0)
        for _ in range(100):
            act.step(0.0, 0.001)
        assert act.angle == 0.0

    def test_full_command_reaches_and_holds_stop(self):
        act = Actuator(time_constant=0.02, rate_max=180.0)
        for _ in range(2000):
            act.step(1.0, 0.001)
        assert act.angle == 90.0
        assert act.rate == 0.0

    def test_first_order_closed_form(self):
        # theta(t) = rate_max * (t - tau * (1 - exp(-t/tau))) from rest.
        tau, rate_max, t_end = 0.02, 180.0, 0.1
        closed = rate_max * (t_end - tau * (1.0 - math.exp(-t_end / tau)))
        assert closed == pytest.approx(14.4243, abs=1e-3)

        fine = Actuator(time_constant=tau, rate_max=rate_max)
        for _ in range(10_000):
            fine.step(1.0, 1e-5)
        assert fine.angle == pytest.approx(closed, abs=0.01)

        production = Actuator(time_constant=tau, rate_max=rate_max)
        for _ in range(100):
            production.step(1.0, 1e-3)
        assert production.angle == pytest.approx(closed, rel=5e-3)

    def test_command_clamped(self):
        act = Actuator()
        act.step(7.0, 0.001)
        assert act.command == 1.0
        act.step(-7.0, 0.001)
        assert act.command == -1.0

    def test_backlash_lost_motion(self):
        act = Actuator(backlash=1.0)
        for _ in range(200):
            act.step(1.0, 0.001)
        assert act.valve_angle == pytest.approx(act.angle - 1.0, rel=1e-9)
        # Reversing: the valve holds until the motor crosses the lash band.
        peak = max(act.angle, 0.0)
        held = act.valve_angle
        while act.angle > peak - 0.5:
            act.step(-1.0, 0.001)
            peak = max(peak, act.angle)
            held = max(held, act.valve_angle)
        assert act.valve_angle == held  # motor moved 0.5 deg, valve did not
        while act.angle > peak - 2.0:
            act.step(-1.0, 0.001)
        assert act.valve_angle == pytest.approx(act.angle, rel=1e-9)  # lash taken up

    def test_encoder_quantization(self):
        act = Actuator(encoder_counts_per_degree=10.0)
        act.angle = 12.3456
        assert act.measured_angle() == pytest.approx(12.3)


def make_ereg(kind="tank", use_ff=True, use_ramp=True, primary=PidGains(4.0e-5, 6.0e-5, 0.0)):
    valve = GAS_VALVE if kind == "tank" else LIQ_VALVE
    ff = FeedforwardParams(
        gamma=73.0,
        nominal_flow=1.0e-3,
        fluid_density=1141.0,
        alpha=valve.alpha,
        theta_zero=valve.theta_zero,
        min_drop=1e4,
    )
    return EregController(
        kind=kind,
        valve=valve,
        primary_gains=primary,
        secondary_gains=PidGains(0.5, 1.0, 0.01),
        feedforward=ff,
        ramp=RampSchedule(2.0),
        actuator=Actuator(),
        primary_period=0.01,
        secondary_period=0.001,
        use_feedforward=use_ff,
        use_gain_ramp=use_ramp,
    )


class TestEregController:
    def test_feedforward_only_traces_formula_exactly(self):
        ctrl = make_ereg(primary=PidGains(0.0, 0.0, 0.0))
        t = 0.0
        for k in range(500):
            p_sup = 310e5 - 2e7 * t
            ctrl.step(41.5e5, p_sup, 42e5, t, 0.001)
            if k % 10 == 0:
                expected = ff_tank(ctrl.feedforward, 42e5, p_sup)
                assert ctrl.u1 == expected
            t += 0.001

    def test_zero_error_fresh_state_gives_feedforward(self):
        ctrl = make_ereg()
        ctrl.step(42e5, 310e5, 42e5, 0.0, 0.001)
        assert ctrl.u1 == pytest.approx(ff_tank(ctrl.feedforward, 42e5, 310e5), rel=1e-12)

    @given(
        st.floats(1e4, 5e7), st.floats(1e5, 5e7), st.floats(1e4, 9e6),
        st.floats(0.0, 20.0),
    )
    def test_outputs_always_in_range(self, downstream, upstream, setpoint, t):
        ctrl = make_ereg(primary=PidGains(1e-3, 1e-3, 1e-5))
        for _ in range(3):
            u2 = ctrl.step(downstream, upstream, setpoint, t, 0.001)
        assert 0.0 <= ctrl.u1 <= 90.0
        assert abs(u2) <= 1.0

    def test_deterministic_twins(self):
        a, b = make_ereg(), make_ereg()
        inputs = [(41e5 + 1e3 * k, 310e5 - 1e4 * k, 42e5, 0.001 * k) for k in range(1000)]
        for (d, u, s, t) in inputs:
            ua = a.step(d, u, s, t, 0.001)
            ub = b.step(d, u, s, t, 0.001)
            assert ua == ub
            a.actuator.step(ua, 0.001)
            b.actuator.step(ub, 0.001)
            assert a.actuator.angle == b.actuator.angle

    def test_primary_refresh_period(self):
        ctrl = make_ereg()
        ctrl.step(40e5, 310e5, 42e5, 0.0, 0.001)
        u1_first = ctrl.u1
        # Secondary ticks between primary refreshes must not change u1.
        for k in range(1, 10):
            ctrl.step(30e5, 310e5, 42e5, 0.001 * k, 0.001)
            assert ctrl.u1 == u1_first
        ctrl.step(30e5, 310e5, 42e5, 0.010, 0.001)
        assert ctrl.u1 != u1_first

    def test_injector_drop_reference_selects_tank_setpoint(self):
        valve = LIQ_VALVE
        ff = FeedforwardParams(
            nominal_flow=1e-3, fluid_density=1141.0, alpha=valve.alpha,
            theta_zero=valve.theta_zero, min_drop=1e4, drop_reference="tank_setpoint",
        )
        ctrl = EregController(
            kind="injector", valve=valve, primary_gains=PidGains(0.0, 0.0, 0.0),
            secondary_gains=PidGains(0.5, 1.0, 0.01), feedforward=ff,
            ramp=RampSchedule(2.0), actuator=Actuator(), primary_period=0.01,
            secondary_period=0.001, tank_setpoint_for_ff=42e5,
        )
        ctrl.step(34e5, 41.8e5, 34.26e5, 0.0, 0.001)
        expected = ff_injector(ff, 41.8e5, 42e5)  # drop measured against the tank setpoint
        assert ctrl.u1 == pytest.approx(expected, rel=1e-12)
