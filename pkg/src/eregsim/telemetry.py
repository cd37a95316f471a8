"""Structured per-tick output, CSV emission and regulation metrics.

Telemetry values use operator-facing units (bar, degrees, N, kg/s); the
CSV column order is fixed and documented in docs/telemetry_schema.md.
Floats are written at 9 significant digits and round-trip losslessly at
that precision through read_telemetry.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import EregSimError
from .scenario import EREG_NAMES, ScenarioConfig, setpoints_at

TELEMETRY_SCHEMA_VERSION = 1

EREG_FIELDS = ("setpoint_bar", "pressure_bar", "valve_angle_deg", "feedforward_deg", "u1_deg", "u2")
SCALAR_FIELDS = (
    "supply_pressure_bar",
    "mdot_ox_kg_s",
    "mdot_fuel_kg_s",
    "mdot_gas_kg_s",
    "chamber_pressure_bar",
    "thrust_n",
    "of_ratio",
)


@dataclass(frozen=True)
class EregFrame:
    setpoint_bar: float
    pressure_bar: float
    valve_angle_deg: float
    feedforward_deg: float
    u1_deg: float
    u2: float


@dataclass(frozen=True)
class TelemetryFrame:
    time_s: float
    ox_tank: EregFrame
    fuel_tank: EregFrame
    ox_inj: EregFrame
    fuel_inj: EregFrame
    supply_pressure_bar: float
    mdot_ox_kg_s: float
    mdot_fuel_kg_s: float
    mdot_gas_kg_s: float
    chamber_pressure_bar: float
    thrust_n: float
    of_ratio: float  # 0.0 while the fuel flow is zero
    events: tuple[str, ...] = ()

    def ereg(self, name: str) -> EregFrame:
        return getattr(self, name)

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float) and not math.isfinite(value):
                raise EregSimError(f"non-finite telemetry field {f.name}={value}")
        for name in EREG_NAMES:
            sub = self.ereg(name)
            for f in fields(sub):
                if not math.isfinite(getattr(sub, f.name)):
                    raise EregSimError(f"non-finite telemetry field {name}.{f.name}")


def csv_header() -> list[str]:
    columns = ["time_s"]
    for name in EREG_NAMES:
        columns.extend(f"{name}_{f}" for f in EREG_FIELDS)
    columns.extend(SCALAR_FIELDS)
    columns.append("events")
    return columns


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def emit_telemetry(frames: list[TelemetryFrame], destination: str | Path) -> None:
    """Write frames as CSV with the fixed documented column order."""
    destination = Path(destination)
    try:
        with destination.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(csv_header())
            for frame in frames:
                row = [_fmt(frame.time_s)]
                for name in EREG_NAMES:
                    sub = frame.ereg(name)
                    row.extend(_fmt(getattr(sub, f)) for f in EREG_FIELDS)
                row.extend(_fmt(getattr(frame, f)) for f in SCALAR_FIELDS)
                row.append(";".join(frame.events))
                writer.writerow(row)
    except OSError as exc:
        raise EregSimError(f"cannot write telemetry to {destination}: {exc}") from exc


def read_telemetry(path: str | Path) -> list[TelemetryFrame]:
    path = Path(path)
    expected = csv_header()
    frames: list[TelemetryFrame] = []
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != expected:
                raise EregSimError(f"unexpected telemetry header in {path}")
            for row in reader:
                values = iter(row)
                time_s = float(next(values))
                eregs = {}
                for name in EREG_NAMES:
                    eregs[name] = EregFrame(*(float(next(values)) for _ in EREG_FIELDS))
                scalars = [float(next(values)) for _ in SCALAR_FIELDS]
                events_raw = next(values)
                events = tuple(events_raw.split(";")) if events_raw else ()
                frames.append(TelemetryFrame(time_s, *(eregs[n] for n in EREG_NAMES), *scalars, events))
    except OSError as exc:
        raise EregSimError(f"cannot read telemetry from {path}: {exc}") from exc
    return frames


# ---------------------------------------------------------------------------
# Regulation metrics


@dataclass(frozen=True)
class EregMetrics:
    max_abs_error: float  # bar
    rms_error: float  # bar
    settle_time: float  # s (inf if the error never stays settled)
    overshoot: float  # bar beyond the steady error
    peak_oscillation_amplitude: float  # bar peak-to-peak in the early window


@dataclass(frozen=True)
class RegulationMetrics:
    per_ereg: dict[str, EregMetrics] = field(default_factory=dict)

    def __getitem__(self, name: str) -> EregMetrics:
        return self.per_ereg[name]


def _first_depletion_time(frames: list[TelemetryFrame]) -> float:
    for frame in frames:
        if any(e.endswith("liquid_depleted") for e in frame.events):
            return frame.time_s
    return math.inf


def regulation_metrics(frames: list[TelemetryFrame], config: ScenarioConfig) -> RegulationMetrics:
    """Per-regulator tracking metrics against the scheduled setpoints.

    The startup transient window is excluded from error statistics; the
    oscillation amplitude is the max peak-to-peak error within the early
    window measured from t = 0. Frames after the first liquid depletion
    are excluded when configured (the end-of-burn transient is a plant
    event, not a regulation failure).
    """
    if not frames:
        raise EregSimError("regulation metrics need at least one frame")
    settings = config.metrics
    cutoff = _first_depletion_time(frames) if settings.exclude_after_depletion else math.inf

    per_ereg = {}
    for name in EREG_NAMES:
        errors_bar = []
        times = []
        early = []
        for frame in frames:
            sub = frame.ereg(name)
            err = sub.pressure_bar - sub.setpoint_bar
            if frame.time_s <= settings.early_window:
                early.append(err)
            if frame.time_s < settings.startup_window or frame.time_s >= cutoff:
                continue
            errors_bar.append(err)
            times.append(frame.time_s)

        if errors_bar:
            max_abs = max(abs(e) for e in errors_bar)
            rms = math.sqrt(sum(e * e for e in errors_bar) / len(errors_bar))
            threshold_bar = settings.settle_threshold / 1e5
            settle = 0.0 if times else math.inf
            for t, e in zip(times, errors_bar):
                if abs(e) > threshold_bar:
                    settle = math.inf
                elif settle == math.inf:
                    settle = t
            # Steady error is the mean over the final tenth of the window;
            # overshoot is peak exceedance beyond it, so a constant offset
            # reads as zero overshoot.
            tail = max(1, len(errors_bar) // 10)
            steady = sum(errors_bar[-tail:]) / tail
            overshoot = max(0.0, max(errors_bar) - max(0.0, steady))
        else:
            max_abs = rms = overshoot = 0.0
            settle = 0.0
        oscillation = (max(early) - min(early)) if early else 0.0
        per_ereg[name] = EregMetrics(
            max_abs_error=max_abs,
            rms_error=rms,
            settle_time=settle,
            overshoot=overshoot,
            peak_oscillation_amplitude=oscillation,
        )
    return RegulationMetrics(per_ereg)


def scheduled_setpoints_check(frames: list[TelemetryFrame], config: ScenarioConfig) -> float:
    """Worst mismatch (bar) between logged and scheduled setpoints."""
    worst = 0.0
    for frame in frames:
        scheduled = setpoints_at(config.schedule, frame.time_s)
        for name in EREG_NAMES:
            logged = frame.ereg(name).setpoint_bar
            worst = max(worst, abs(logged - scheduled.for_ereg(name) / 1e5))
    return worst
