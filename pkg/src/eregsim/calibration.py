"""Fits the empirical model parameters from logged flow data.

Three fits close the loop between telemetry and the feedforward model:
the piecewise-linear valve flow coefficient curve (alpha, theta_zero),
the tank feedforward constant gamma, and the choked-flow constant k.
All fits are exact inverses on noiseless model-generated data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import DegenerateFitError
from .fluids import CHOKED_PRESSURE_RATIO
from .telemetry import TelemetryFrame

THETA_GRID_STEP = 0.1  # degrees, breakpoint search resolution

# Steady-state detection for gamma fitting: regulation error below half the
# reported accuracy, sustained long enough to exclude transients.
STEADY_ERROR_THRESHOLD = 0.25e5  # Pa
STEADY_SUSTAIN = 0.5  # s


@dataclass(frozen=True)
class FlowSample:
    valve_angle: float  # degrees
    upstream_pressure: float  # Pa
    downstream_pressure: float  # Pa
    flow: float  # kg/s for gas samples, m3/s for liquid samples
    fluid_density: float  # kg/m3
    phase: str  # "gas" or "liquid"

    def validate(self) -> None:
        if self.phase not in ("gas", "liquid"):
            raise ValueError(f"unknown phase {self.phase!r}")
        if not 0.0 <= self.valve_angle <= 90.0:
            raise ValueError(f"valve angle {self.valve_angle} outside [0, 90]")
        for name in ("upstream_pressure", "downstream_pressure", "flow", "fluid_density"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite sample field {name}")


@dataclass(frozen=True)
class CvFit:
    alpha: float  # m2 per degree
    theta_zero: float  # degrees
    residual_rms: float
    sample_count: int


def cv_from_sample(sample: FlowSample, choked_constant: float = 0.0) -> float:
    """Invert the matching flow law to get the sample's flow coefficient.

    Liquid: Cv = Q / sqrt(dp / rho), requires a positive drop.
    Gas (choked): Cv = Q / (k * p_up), requires the constant k (known or
    provisional from a previous iteration).
    """
    sample.validate()
    if sample.flow == 0.0:
        return 0.0
    if sample.phase == "liquid":
        dp = sample.upstream_pressure - sample.downstream_pressure
        if dp <= 0.0:
            raise ValueError("liquid sample rejected: nonpositive pressure drop")
        return sample.flow / math.sqrt(dp / sample.fluid_density)
    if choked_constant <= 0.0:
        raise ValueError("gas sample needs a positive choked constant")
    return sample.flow / (choked_constant * sample.upstream_pressure)


def cv_fit_objective(samples: list[tuple[float, float]], alpha: float, theta_zero: float) -> float:
    """Sum of squared residuals of Cv_i against max(0, alpha*(theta_i - theta_zero))."""
    total = 0.0
    for theta, cv in samples:
        predicted = max(0.0, alpha * (theta - theta_zero))
        total += (cv - predicted) ** 2
    return total


def cv_fit_objective_grad_alpha(
    samples: list[tuple[float, float]], alpha: float, theta_zero: float
) -> float:
    """Analytic d/d(alpha) of cv_fit_objective (dead-band points contribute 0)."""
    grad = 0.0
    for theta, cv in samples:
        x = theta - theta_zero
        if x > 0.0 and alpha * x > 0.0:
            grad += -2.0 * (cv - alpha * x) * x
    return grad


def fit_cv_curve(samples: list[tuple[float, float]]) -> CvFit:
    """Least-squares fit of the piecewise-linear Cv curve.

    Grid search over the breakpoint theta_zero at 0.1 degree resolution
    with the closed-form least-squares slope at each candidate; ties break
    toward the smaller breakpoint. samples are (theta, Cv) pairs.
    """
    if len(samples) < 3:
        raise DegenerateFitError("need at least 3 samples to fit the Cv curve")
    thetas = np.array([s[0] for s in samples], dtype=float)
    cvs = np.array([s[1] for s in samples], dtype=float)
    if np.ptp(thetas) == 0.0:
        raise DegenerateFitError("all samples at one angle: Cv slope unidentifiable")

    best = None
    candidates = np.arange(0.0, 90.0, THETA_GRID_STEP)
    for theta_zero in candidates:
        x = thetas - theta_zero
        active = x > 0.0
        denom = float(np.sum(x[active] ** 2))
        if denom > 0.0:
            alpha = float(np.sum(cvs[active] * x[active])) / denom
        else:
            alpha = 0.0
        alpha = max(alpha, 0.0)
        predicted = np.where(active, alpha * x, 0.0)
        objective = float(np.sum((cvs - predicted) ** 2))
        if best is None or objective < best[0]:
            best = (objective, theta_zero, alpha)

    objective, theta_zero, alpha = best
    if alpha <= 0.0:
        raise DegenerateFitError("no positive slope found: samples carry no flow")
    return CvFit(
        alpha=alpha,
        theta_zero=float(theta_zero),
        residual_rms=math.sqrt(objective / len(samples)),
        sample_count=len(samples),
    )


def fit_gamma(records: list[tuple[float, float, float]], theta_zero: float) -> float:
    """Least-squares slope of (angle - theta_zero) against min(1, s_t / p_p).

    records are steady-regulation rows of (valve_angle, tank_setpoint,
    supply_pressure). The fit is through the origin; the intercept is the
    known dead-band angle.
    """
    if len(records) < 2:
        raise DegenerateFitError("need at least 2 steady records to fit gamma")
    ratios = [min(1.0, s / p) for _, s, p in records]
    if len({round(r, 12) for r in ratios}) < 2:
        raise DegenerateFitError("need at least 2 distinct pressure ratios to fit gamma")
    num = sum(r * (angle - theta_zero) for (angle, _, _), r in zip(records, ratios))
    den = sum(r * r for r in ratios)
    if den == 0.0:
        raise DegenerateFitError("all pressure ratios are zero")
    return num / den


def fit_choked_constant(
    samples: list[FlowSample], alpha: float, theta_zero: float
) -> float:
    """Least-squares slope of gas mass flow against Cv * p_up through the origin.

    Only samples in the choked regime (downstream/upstream below the
    critical ratio) are used; the valve curve (alpha, theta_zero) supplies
    the Cv of each sample from its angle.
    """
    xs, ys = [], []
    for sample in samples:
        sample.validate()
        if sample.phase != "gas":
            continue
        if sample.downstream_pressure / sample.upstream_pressure >= CHOKED_PRESSURE_RATIO:
            continue
        cv = max(0.0, alpha * (sample.valve_angle - theta_zero))
        xs.append(cv * sample.upstream_pressure)
        ys.append(sample.flow)
    den = sum(x * x for x in xs)
    if den == 0.0:
        raise DegenerateFitError("no choked samples with open valve: k unidentifiable")
    return sum(x * y for x, y in zip(xs, ys)) / den


# ---------------------------------------------------------------------------
# Telemetry adapters


def steady_records(
    frames: list[TelemetryFrame],
    ereg_name: str,
    error_threshold: float = STEADY_ERROR_THRESHOLD,
    sustain: float = STEADY_SUSTAIN,
) -> list[tuple[float, float, float]]:
    """Extract (angle, setpoint, supply_pressure) rows in steady regulation.

    A frame counts as steady once the regulation error has stayed below
    the threshold for the sustain period.
    """
    records = []
    streak_start = None
    for frame in frames:
        sub = frame.ereg(ereg_name)
        error = abs(sub.pressure_bar - sub.setpoint_bar) * 1e5
        if error < error_threshold:
            if streak_start is None:
                streak_start = frame.time_s
            if frame.time_s - streak_start >= sustain:
                records.append(
                    (sub.valve_angle_deg, sub.setpoint_bar * 1e5, frame.supply_pressure_bar * 1e5)
                )
        else:
            streak_start = None
    return records


def liquid_samples_from_telemetry(
    frames: list[TelemetryFrame], side: str, density: float
) -> list[FlowSample]:
    """Liquid FlowSamples for one injector regulator from a telemetry log.

    Upstream is the tank sensor, downstream the injector sensor; the
    implied Cv therefore lumps the feed line into the valve, matching what
    an empirical characterization sees.
    """
    samples = []
    for frame in frames:
        inj = frame.ereg(side + "_inj")
        tank = frame.ereg(side + "_tank")
        mdot = frame.mdot_ox_kg_s if side == "ox" else frame.mdot_fuel_kg_s
        samples.append(
            FlowSample(
                valve_angle=inj.valve_angle_deg,
                upstream_pressure=tank.pressure_bar * 1e5,
                downstream_pressure=inj.pressure_bar * 1e5,
                flow=mdot / density,
                fluid_density=density,
                phase="liquid",
            )
        )
    return samples


def gas_samples_from_telemetry(frames: list[TelemetryFrame], side: str) -> list[FlowSample]:
    """Gas FlowSamples for one tank regulator.

    The telemetry carries the total pressurant flow, so this is only valid
    for runs where a single tank valve is active (the standard one-valve
    characterization flow).
    """
    samples = []
    for frame in frames:
        tank = frame.ereg(side + "_tank")
        samples.append(
            FlowSample(
                valve_angle=tank.valve_angle_deg,
                upstream_pressure=frame.supply_pressure_bar * 1e5,
                downstream_pressure=tank.pressure_bar * 1e5,
                flow=frame.mdot_gas_kg_s,
                fluid_density=0.0,
                phase="gas",
            )
        )
    return samples


def write_fit_result(path: str | Path, kind: str, parameters: dict) -> None:
    """Write a fit result as structured text (kind, parameters, residuals)."""
    payload = {"fit": kind}
    payload.update(parameters)
    Path(path).write_text(yaml.safe_dump(payload, sort_keys=False))
