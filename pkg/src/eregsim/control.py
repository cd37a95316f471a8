"""Electronic-regulator controller stack.

Each regulator is a cascade: a primary pressure loop computes a valve
angle setpoint from the downstream pressure error (plus a model-based
feedforward term and time-ramped gains), and a secondary position loop
drives the motor command to reach that angle. The secondary loop runs at
least as fast as the primary; both periods are integer multiples of the
physics step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ControllerError
from .fluids import ValveModel, cv_of_angle

FULL_TRAVEL = 90.0  # degrees, hard stops at both ends


def _require_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ControllerError(f"non-finite controller input: {name}={value}")


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float
    kd: float

    def validate(self) -> None:
        if self.kp < 0.0 or self.ki < 0.0 or self.kd < 0.0:
            raise ControllerError("PID gains must be nonnegative")

    def scaled(self, factor: float) -> "PidGains":
        return PidGains(self.kp * factor, self.ki * factor, self.kd * factor)


@dataclass(frozen=True)
class RampSchedule:
    """Linear gain ramp: factor(t) = min(1, t / ramp_time)."""

    ramp_time: float  # s

    def validate(self) -> None:
        if self.ramp_time <= 0.0:
            raise ControllerError("ramp_time must be positive")

    def factor(self, t: float) -> float:
        return min(1.0, t / self.ramp_time)


def dynamic_gains(base: PidGains, t: float, ramp: RampSchedule) -> PidGains:
    """Scale all three gains by the ramp factor min(1, t/T)."""
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    return base.scaled(ramp.factor(t))


@dataclass(frozen=True)
class FeedforwardParams:
    """Constants for the model-based feedforward terms.

    Tank regulators use gamma * min(1, setpoint / supply_pressure) + theta_zero.
    Injector regulators invert the liquid valve law at the nominal flow:
    nominal_flow * sqrt(density / available_drop) / alpha + theta_zero.
    """

    gamma: float = 0.0  # degrees, tank variant
    nominal_flow: float = 0.0  # m3/s, injector variant
    fluid_density: float = 0.0  # kg/m3, injector variant
    alpha: float = 0.0  # m2 per degree, shared with the valve model
    theta_zero: float = 0.0  # degrees
    min_drop: float = 1.0e4  # Pa, floor below which the valve goes fully open
    drop_reference: str = "injector_setpoint"  # or "tank_setpoint"


def ff_tank(ff: FeedforwardParams, tank_setpoint: float, supply_pressure: float) -> float:
    """Tank-regulator feedforward angle, clamped to the valve travel."""
    if supply_pressure <= 0.0:
        raise ValueError("supply pressure must be positive")
    angle = ff.gamma * min(1.0, tank_setpoint / supply_pressure) + ff.theta_zero
    return min(max(angle, 0.0), FULL_TRAVEL)


def ff_injector(ff: FeedforwardParams, tank_pressure: float, injector_setpoint: float) -> float:
    """Injector-regulator feedforward angle.

    When the available drop tank_pressure - setpoint falls below the
    configured floor the formula diverges; the physically correct limit is
    a fully open valve, which is returned instead of an error.
    """
    drop = tank_pressure - injector_setpoint
    if drop <= ff.min_drop:
        return FULL_TRAVEL
    angle = ff.nominal_flow * math.sqrt(ff.fluid_density / drop) / ff.alpha + ff.theta_zero
    return min(max(angle, 0.0), FULL_TRAVEL)


class PidController:
    """Discrete PID: rectangular integration, derivative on the measurement.

    The integral state accumulates the integral term directly in output
    units (ki * e * dt per step), which keeps gain ramping bumpless and
    makes the integral limits meaningful as output authority. The
    derivative acts on a first-order filtered measurement (time constant
    4 sample periods) so setpoint steps produce no impulse and sensor
    noise is not amplified. Anti-windup is conditional: the integrator is
    frozen whenever the output is saturated in the same direction as the
    error pushes.
    """

    def __init__(
        self,
        gains: PidGains,
        output_limits: tuple[float, float],
        integral_limits: tuple[float, float],
        derivative_filter_periods: float = 4.0,
    ):
        gains.validate()
        self.gains = gains
        self.output_limits = output_limits
        self.integral_limits = integral_limits
        self.derivative_filter_periods = derivative_filter_periods
        self.integral = 0.0
        self.previous_error = 0.0
        self._filtered_measurement: float | None = None
        self.last_output = 0.0

    def reset(self) -> None:
        self.integral = 0.0
        self.previous_error = 0.0
        self._filtered_measurement = None
        self.last_output = 0.0

    def step(
        self,
        setpoint: float,
        measurement: float,
        dt: float,
        gains: PidGains | None = None,
    ) -> float:
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        _require_finite("setpoint", setpoint)
        _require_finite("measurement", measurement)
        g = self.gains if gains is None else gains
        error = setpoint - measurement

        # Derivative on the low-pass filtered measurement, negated so that a
        # rising measurement opposes the output (no setpoint kick).
        tau = self.derivative_filter_periods * dt
        if self._filtered_measurement is None:
            self._filtered_measurement = measurement
        previous_filtered = self._filtered_measurement
        self._filtered_measurement += (dt / (tau + dt)) * (measurement - previous_filtered)
        derivative = -(self._filtered_measurement - previous_filtered) / dt

        lo_i, hi_i = self.integral_limits
        candidate = min(max(self.integral + g.ki * error * dt, lo_i), hi_i)
        lo, hi = self.output_limits
        output = g.kp * error + candidate + g.kd * derivative
        if (output > hi and error > 0.0) or (output < lo and error < 0.0):
            # Saturated in the direction the error is pushing: keep the old
            # integral instead of winding it further.
            candidate = self.integral
            output = g.kp * error + candidate + g.kd * derivative
        self.integral = candidate
        output = min(max(output, lo), hi)

        self.previous_error = error
        self.last_output = output
        _require_finite("output", output)
        return output


class Actuator:
    """Lumped motor + gearbox + valve stem.

    The shaft rate relaxes toward command * rate_max with a first-order
    time constant; the angle integrates the rate and stops hard at the
    travel limits (rate zeroed). Optional backlash models lost motion
    between the motor shaft (where the encoder sits) and the ball valve.
    """

    def __init__(
        self,
        time_constant: float = 0.020,  # s
        rate_max: float = 180.0,  # degrees/s
        initial_angle: float = 0.0,
        backlash: float = 0.0,  # degrees of lost motion
        encoder_counts_per_degree: float = 0.0,  # 0 disables quantization
    ):
        if time_constant <= 0.0 or rate_max <= 0.0:
            raise ValueError("actuator time constant and rate limit must be positive")
        self.time_constant = time_constant
        self.rate_max = rate_max
        self.angle = initial_angle  # motor-side angle, degrees
        self.valve_angle = initial_angle  # downstream of any backlash
        self.rate = 0.0
        self.command = 0.0
        self.backlash = backlash
        self.encoder_counts_per_degree = encoder_counts_per_degree

    def measured_angle(self) -> float:
        """Encoder reading (motor shaft), optionally quantized."""
        if self.encoder_counts_per_degree > 0.0:
            counts = math.floor(self.angle * self.encoder_counts_per_degree)
            return counts / self.encoder_counts_per_degree
        return self.angle

    def step(self, command: float, dt: float) -> None:
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        _require_finite("command", command)
        self.command = min(max(command, -1.0), 1.0)
        target_rate = self.command * self.rate_max
        # Exact zero-order-hold discretization of the rate lag and its
        # integral: no step-size error for a command held across the step.
        decay = math.exp(-dt / self.time_constant)
        self.angle += target_rate * dt + (self.rate - target_rate) * self.time_constant * (
            1.0 - decay
        )
        self.rate = target_rate + (self.rate - target_rate) * decay
        if self.angle <= 0.0:
            self.angle = 0.0
            self.rate = 0.0
        elif self.angle >= FULL_TRAVEL:
            self.angle = FULL_TRAVEL
            self.rate = 0.0
        # Lost motion: the valve only moves once the motor takes up the lash.
        self.valve_angle = min(max(self.valve_angle, self.angle - self.backlash), self.angle)


class EregController:
    """One regulator: primary pressure loop cascaded into a motor loop.

    kind selects the feedforward formula ("tank" or "injector"). The
    primary loop refreshes its angle setpoint every primary_period; the
    secondary loop recomputes the motor command every call to step().
    Feedforward and PID output are summed and the sum is clamped to the
    valve travel; the primary anti-windup saturates against that same
    clamp so the integrator cannot wind while the valve is pinned.
    """

    def __init__(
        self,
        kind: str,
        valve: ValveModel,
        primary_gains: PidGains,
        secondary_gains: PidGains,
        feedforward: FeedforwardParams,
        ramp: RampSchedule,
        actuator: Actuator,
        primary_period: float,
        secondary_period: float,
        use_feedforward: bool = True,
        use_gain_ramp: bool = True,
        integral_limits: tuple[float, float] = (-45.0, 45.0),
        secondary_integral_limits: tuple[float, float] = (-0.5, 0.5),
        tank_setpoint_for_ff: float = 0.0,
    ):
        if kind not in ("tank", "injector"):
            raise ValueError(f"unknown regulator kind {kind!r}")
        if secondary_period > primary_period:
            raise ValueError("secondary period must not exceed primary period")
        ratio = primary_period / secondary_period
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("primary period must be an integer multiple of secondary period")
        ramp.validate()
        self.kind = kind
        self.valve = valve
        self.primary_base_gains = primary_gains
        self.ramp = ramp
        self.feedforward = feedforward
        self.actuator = actuator
        self.primary_period = primary_period
        self.secondary_period = secondary_period
        self.use_feedforward = use_feedforward
        self.use_gain_ramp = use_gain_ramp
        self.tank_setpoint_for_ff = tank_setpoint_for_ff
        self.primary = PidController(primary_gains, (0.0, FULL_TRAVEL), integral_limits)
        self.secondary = PidController(
            secondary_gains, (-1.0, 1.0), secondary_integral_limits
        )
        self._ticks_per_primary = int(round(ratio))
        self._tick = 0
        self.u1 = 0.0  # valve angle setpoint, degrees
        self.u2 = 0.0  # motor command
        self.last_feedforward = 0.0

    def feedforward_angle(self, upstream_pressure: float, setpoint: float) -> float:
        if self.kind == "tank":
            return ff_tank(self.feedforward, setpoint, upstream_pressure)
        drop_setpoint = setpoint
        if self.feedforward.drop_reference == "tank_setpoint":
            drop_setpoint = self.tank_setpoint_for_ff
        return ff_injector(self.feedforward, upstream_pressure, drop_setpoint)

    def step(
        self,
        downstream_pressure: float,
        upstream_pressure: float,
        setpoint: float,
        t: float,
        dt: float,
    ) -> float:
        """Advance the cascade one secondary tick; returns the motor command."""
        _require_finite("downstream_pressure", downstream_pressure)
        _require_finite("upstream_pressure", upstream_pressure)
        _require_finite("setpoint", setpoint)
        if self._tick % self._ticks_per_primary == 0:
            ff_angle = 0.0
            if self.use_feedforward:
                ff_angle = self.feedforward_angle(upstream_pressure, setpoint)
            gains = self.primary_base_gains
            if self.use_gain_ramp:
                gains = dynamic_gains(gains, t, self.ramp)
            # Saturate the PID against the travel limits shifted by the
            # feedforward so the summed command clamps exactly at [0, 90].
            self.primary.output_limits = (-ff_angle, FULL_TRAVEL - ff_angle)
            pid_out = self.primary.step(setpoint, downstream_pressure, self.primary_period, gains)
            self.u1 = min(max(ff_angle + pid_out, 0.0), FULL_TRAVEL)
            self.last_feedforward = ff_angle
        self.u2 = self.secondary.step(self.u1, self.actuator.measured_angle(), dt)
        self._tick += 1
        return self.u2

    def valve_cv(self) -> float:
        return cv_of_angle(self.valve, self.actuator.valve_angle)
