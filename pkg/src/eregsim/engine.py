"""Fixed-step co-simulation of the plant and the four regulators.

Topology: supply tank -> tank regulators -> propellant tank ullages;
propellant tanks -> feed lines -> injector regulators -> injector
orifices -> thrust chamber (or atmosphere when no chamber is fitted).

Tank states advance with classical fourth-order Runge-Kutta at the
physics step; the algebraic flow laws are evaluated inside the stage
functions. Controllers tick on their own (slower or equal) periods, so
a run is a deterministic interleaving fully determined by the scenario.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .control import Actuator, EregController, RampSchedule
from .errors import EregSimError
from .fluids import (
    GasTankState,
    PropellantTankState,
    branch_flow,
    chamber_state,
    cv_of_angle,
    gas_valve_mass_flow,
    choked_flow_fade,
    step_gas_tank,
    step_propellant_tank,
)
from .scenario import EREG_NAMES, TANK_EREGS, ScenarioConfig, setpoints_at
from .telemetry import EregFrame, TelemetryFrame, regulation_metrics, RegulationMetrics

EVENT_ABORT = "abort_overpressure"
EVENT_SUPPLY_DEPLETED = "supply_gas_depleted"


def depletion_event(side: str) -> str:
    return f"{side}_liquid_depleted"


ADIABATIC_GAMMA = 1.4  # nitrogen, used only in the adiabatic supply mode


@dataclass
class NetworkFlows:
    """Algebraic flow solution at one instant (fixed angles and tank states)."""

    mdot_gas: dict[str, float]  # per side, supply -> ullage
    q_liquid: dict[str, float]  # per side, m3/s out of the tank
    mdot_liquid: dict[str, float]
    p_injector: dict[str, float]
    chamber_pressure: float
    thrust: float


class _Plant:
    """Mutable plant state plus the network solver with a warm-started Pc."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.supply = GasTankState.from_pressure(
            config.supply_pressure,
            config.supply_volume,
            config.gas_temperature,
            config.gas_constant,
        )
        self.tanks: dict[str, PropellantTankState] = {}
        for side in ("ox", "fuel"):
            t = config.tanks[side]
            liquid = t.total_volume * (1.0 - t.initial_ullage_fraction)
            ullage = GasTankState.from_pressure(
                t.initial_pressure,
                t.total_volume - liquid,
                config.gas_temperature,
                config.gas_constant,
            )
            self.tanks[side] = PropellantTankState(
                total_volume=t.total_volume,
                liquid_volume=liquid,
                liquid_density=t.liquid_density,
                ullage=ullage,
            )
        self._pc_guess = config.ambient_pressure
        self._supply_exponent = ADIABATIC_GAMMA if config.adiabatic_supply else None

    # -- algebraic network -------------------------------------------------

    def _solve_back_pressure(self, p_tank: dict[str, float], cv: dict[str, float],
                             has_liquid: dict[str, bool]) -> float:
        """Chamber pressure consistent with both branch flows.

        Monotone scalar root-find (Newton with bisection safeguard) of
        pc = (cstar/At) * sum_i mdot_i(pc); floored at ambient.
        """
        config = self.config
        chamber = config.chamber
        if chamber is None:
            return config.ambient_pressure
        gain = chamber.characteristic_velocity / chamber.throat_area

        branches = []
        for side in ("ox", "fuel"):
            if not has_liquid[side] or cv[side] <= 0.0:
                continue
            rho = config.tanks[side].liquid_density
            coeff = (
                config.lines[side].loss_coefficient
                + 1.0 / cv[side] ** 2
                + config.injectors[side].coeff
            )
            branches.append((p_tank[side], math.sqrt(rho / coeff)))
        if not branches:
            return config.ambient_pressure

        def residual(pc: float) -> tuple[float, float]:
            total = 0.0
            slope = 1.0
            for p_t, beta in branches:
                drop = p_t - pc
                if drop > 0.0:
                    root = math.sqrt(drop)
                    total += beta * root
                    slope += gain * beta / (2.0 * root)
            return pc - gain * total, slope

        lo = config.ambient_pressure
        hi = max(max(p for p, _ in branches), lo)
        f_lo, _ = residual(lo)
        if f_lo >= 0.0:
            return lo  # weak flow: chamber stays at ambient
        pc = min(max(self._pc_guess, lo), hi)
        for _ in range(60):
            f, slope = residual(pc)
            if abs(f) < 0.5:
                break
            if f > 0.0:
                hi = pc
            else:
                lo = pc
            step = pc - f / slope
            pc = step if lo < step < hi else 0.5 * (lo + hi)
        self._pc_guess = pc
        return pc

    def network_flows(self, supply_p: float, tank_state: dict[str, tuple[float, float]],
                      angles: dict[str, float]) -> NetworkFlows:
        """Flows for given pressures/volumes and valve angles.

        tank_state maps side -> (ullage_pressure, liquid_volume).
        """
        config = self.config
        mdot_gas = {}
        for side in ("ox", "fuel"):
            valve = config.valves[side + "_tank"]
            p_t = tank_state[side][0]
            mdot_gas[side] = gas_valve_mass_flow(valve, angles[side + "_tank"], supply_p, p_t)

        cv = {}
        has_liquid = {}
        p_tank = {}
        for side in ("ox", "fuel"):
            valve = config.valves[side + "_inj"]
            cv[side] = cv_of_angle(valve, angles[side + "_inj"])
            p_tank[side] = tank_state[side][0]
            has_liquid[side] = tank_state[side][1] > 0.0

        back = self._solve_back_pressure(p_tank, cv, has_liquid)

        q_liquid = {}
        mdot_liquid = {}
        p_injector = {}
        for side in ("ox", "fuel"):
            rho = config.tanks[side].liquid_density
            if not has_liquid[side]:
                q_liquid[side] = 0.0
                p_injector[side] = back
            else:
                q, p_i = branch_flow(
                    p_tank[side],
                    back,
                    rho,
                    cv[side],
                    config.lines[side].loss_coefficient,
                    config.injectors[side].coeff,
                )
                q_liquid[side] = q
                p_injector[side] = p_i
            mdot_liquid[side] = q_liquid[side] * rho

        total = mdot_liquid["ox"] + mdot_liquid["fuel"]
        if config.chamber is not None:
            pc, thrust = chamber_state(total, config.chamber)
        else:
            pc, thrust = config.ambient_pressure, 0.0
        return NetworkFlows(mdot_gas, q_liquid, mdot_liquid, p_injector, pc, thrust)

    # -- integration -------------------------------------------------------

    def _derivative(self, y: tuple, angles: dict[str, float]):
        """State derivative at y = (m_sup, m_ull_ox, V_liq_ox, m_ull_fuel, V_liq_fuel)."""
        config = self.config
        m_sup, m_ox, v_ox, m_fuel, v_fuel = y
        rt = config.gas_constant * config.gas_temperature
        if self._supply_exponent is None:
            p_sup = m_sup * rt / config.supply_volume if m_sup > 0.0 else 0.0
        else:
            ref = self.supply
            p_sup = (
                ref.pressure * (max(m_sup, 0.0) / ref.gas_mass) ** self._supply_exponent
                if ref.gas_mass > 0.0
                else 0.0
            )
        state = {}
        for side, m_ull, v_liq in (("ox", m_ox, v_ox), ("fuel", m_fuel, v_fuel)):
            v_ull = config.tanks[side].total_volume - max(v_liq, 0.0)
            state[side] = (m_ull * rt / v_ull, max(v_liq, 0.0))
        flows = self.network_flows(p_sup, state, angles)
        sink_ox = config.ullage_collapse_coeff * m_ox
        sink_fuel = config.ullage_collapse_coeff * m_fuel
        dy = (
            -(flows.mdot_gas["ox"] + flows.mdot_gas["fuel"]),
            flows.mdot_gas["ox"] - sink_ox,
            -flows.q_liquid["ox"],
            flows.mdot_gas["fuel"] - sink_fuel,
            -flows.q_liquid["fuel"],
        )
        return dy, flows

    def step(self, angles: dict[str, float], dt: float) -> list[str]:
        """Advance tanks one physics step (RK4); returns new event names."""
        y0 = (
            self.supply.gas_mass,
            self.tanks["ox"].ullage.gas_mass,
            self.tanks["ox"].liquid_volume,
            self.tanks["fuel"].ullage.gas_mass,
            self.tanks["fuel"].liquid_volume,
        )
        k1, _ = self._derivative(y0, angles)
        k2, _ = self._derivative(tuple(y + 0.5 * dt * k for y, k in zip(y0, k1)), angles)
        k3, _ = self._derivative(tuple(y + 0.5 * dt * k for y, k in zip(y0, k2)), angles)
        k4, _ = self._derivative(tuple(y + dt * k for y, k in zip(y0, k3)), angles)

        def combined(i: int) -> float:
            return (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0

        # Effective transfer rates over the step. The same gas rate feeds the
        # supply drain and the ullage fill, so total gas mass is conserved
        # exactly even at the depletion clamp.
        gas_in = {"ox": combined(1), "fuel": combined(3)}
        collapse = self.config.ullage_collapse_coeff
        if collapse > 0.0:
            # Split the ullage net rate back into valve inflow and sink.
            gas_in = {
                "ox": combined(1) + collapse * self.tanks["ox"].ullage.gas_mass,
                "fuel": combined(3) + collapse * self.tanks["fuel"].ullage.gas_mass,
            }
        total_out = gas_in["ox"] + gas_in["fuel"]

        events: list[str] = []
        if total_out * dt > self.supply.gas_mass:
            scale = self.supply.gas_mass / (total_out * dt)
            gas_in = {side: rate * scale for side, rate in gas_in.items()}
            total_out = gas_in["ox"] + gas_in["fuel"]

        was_depleted = {side: self.tanks[side].depleted for side in ("ox", "fuel")}
        supply_was_depleted = self.supply.depleted

        self.supply = step_gas_tank(
            self.supply, 0.0, total_out, 0.0, dt, isentropic_exponent=self._supply_exponent
        )
        for side, q_index in (("ox", 2), ("fuel", 4)):
            sink = collapse * self.tanks[side].ullage.gas_mass if collapse > 0.0 else 0.0
            self.tanks[side] = step_propellant_tank(
                self.tanks[side],
                gas_in[side] - sink,
                -combined(q_index),
                dt,
            )
        if self.supply.depleted and not supply_was_depleted:
            events.append(EVENT_SUPPLY_DEPLETED)
        for side in ("ox", "fuel"):
            if self.tanks[side].depleted and not was_depleted[side]:
                events.append(depletion_event(side))
        return events

    def snapshot_flows(self, angles: dict[str, float]) -> NetworkFlows:
        state = {
            side: (self.tanks[side].ullage.pressure, self.tanks[side].liquid_volume)
            for side in ("ox", "fuel")
        }
        return self.network_flows(self.supply.pressure, state, angles)


def _build_controllers(config: ScenarioConfig) -> dict[str, EregController | None]:
    controllers: dict[str, EregController | None] = {}
    use_ff = config.variant in ("ff+dyn", "ff")
    use_ramp = config.variant == "ff+dyn"
    for name in EREG_NAMES:
        settings = config.controllers[name]
        if settings.locked_angle is not None or config.variant == "oracle":
            controllers[name] = None
            continue
        side = name.split("_")[0]
        act = config.actuators[name]
        gains = settings.primary_gains
        if config.variant == "ff":
            gains = gains.scaled(0.0)  # feedback disabled, feedforward only
        controllers[name] = EregController(
            kind="tank" if name in TANK_EREGS else "injector",
            valve=config.valves[name],
            primary_gains=gains,
            secondary_gains=settings.secondary_gains,
            feedforward=settings.feedforward,
            ramp=RampSchedule(settings.ramp_time),
            actuator=Actuator(
                time_constant=act.time_constant,
                rate_max=act.rate_max,
                backlash=act.backlash,
                encoder_counts_per_degree=act.encoder_counts_per_degree,
            ),
            primary_period=config.dt_primary,
            secondary_period=config.dt_secondary,
            use_feedforward=use_ff,
            use_gain_ramp=use_ramp,
            integral_limits=settings.integral_limits,
            secondary_integral_limits=settings.secondary_integral_limits,
            tank_setpoint_for_ff=config.tank_setpoint(side),
        )
    return controllers


def _oracle_angles(config: ScenarioConfig, plant: _Plant, flows: NetworkFlows,
                   setpoints) -> dict[str, float]:
    """Valve angles that satisfy the setpoints exactly at the current state.

    Used as a controller-error floor: with these angles the only remaining
    tracking error is the plant's own per-tick drift.
    """
    angles = {}
    rt = config.gas_constant * config.gas_temperature
    for side in ("ox", "fuel"):
        valve = config.valves[side + "_tank"]
        p_sup = plant.supply.pressure
        setpoint = config.tank_setpoint(side)
        demand = setpoint * flows.q_liquid[side] / rt
        fade = choked_flow_fade(plant.tanks[side].ullage.pressure / p_sup) if p_sup > 0 else 0.0
        if p_sup <= 0.0 or fade <= 0.0 or demand <= 0.0:
            theta = 0.0
        else:
            cv = demand / (valve.choked_constant * p_sup * fade)
            theta = valve.theta_zero + cv / valve.alpha
        angles[side + "_tank"] = min(max(theta, 0.0), 90.0)

        ivalve = config.valves[side + "_inj"]
        rho = config.tanks[side].liquid_density
        s_i = getattr(setpoints, side + "_inj")
        back = flows.chamber_pressure if config.chamber is not None else config.ambient_pressure
        q_req = 0.0
        if s_i > back:
            orifice = config.injectors[side]
            q_req = orifice.cd * orifice.area * math.sqrt(2.0 * (s_i - back) / rho)
        p_tank = plant.tanks[side].ullage.pressure
        dp_valve = p_tank - s_i - rho * q_req**2 * config.lines[side].loss_coefficient
        if q_req <= 0.0:
            theta = 0.0
        elif dp_valve <= 0.0:
            theta = 90.0
        else:
            cv = q_req / math.sqrt(dp_valve / rho)
            theta = ivalve.theta_zero + cv / ivalve.alpha
        angles[side + "_inj"] = min(max(theta, 0.0), 90.0)
    return angles


@dataclass
class RunAudit:
    """Per-step invariant monitor filled in by run_scenario on request."""

    initial_gas_mass: float = 0.0
    max_gas_law_residual: float = 0.0
    max_mass_drift: float = 0.0  # relative, vents closed

    def record(self, plant: "_Plant") -> None:
        total = (
            plant.supply.gas_mass
            + plant.tanks["ox"].ullage.gas_mass
            + plant.tanks["fuel"].ullage.gas_mass
        )
        if self.initial_gas_mass == 0.0:
            self.initial_gas_mass = total
        self.max_mass_drift = max(
            self.max_mass_drift, abs(total - self.initial_gas_mass) / self.initial_gas_mass
        )
        self.max_gas_law_residual = max(
            self.max_gas_law_residual,
            plant.supply.gas_law_residual(),
            plant.tanks["ox"].ullage.gas_law_residual(),
            plant.tanks["fuel"].ullage.gas_law_residual(),
        )


def run_scenario(config: ScenarioConfig, audit: RunAudit | None = None) -> list[TelemetryFrame]:
    """Run the fixed-step loop; returns one frame per decimated primary tick.

    The run ends at the configured duration or at an over-pressure abort
    (110 percent of a valve rating upstream of it by default), whichever
    comes first. Output is bit-identical for identical configs.
    """
    plant = _Plant(config)
    if audit is not None:
        audit.record(plant)
    controllers = _build_controllers(config)
    phys_per_secondary = int(round(config.dt_secondary / config.dt_phys))
    phys_per_primary = int(round(config.dt_primary / config.dt_phys))
    n_steps = int(round(config.duration / config.dt_phys))
    rng = np.random.default_rng(config.noise_seed) if config.noise_sigma > 0.0 else None

    angles = {}
    for name in EREG_NAMES:
        locked = config.controllers[name].locked_angle
        ctrl = controllers[name]
        angles[name] = locked if locked is not None else (
            ctrl.actuator.valve_angle if ctrl is not None else 0.0
        )

    frames: list[TelemetryFrame] = []
    events_active: list[str] = []
    measured = {name: 0.0 for name in EREG_NAMES}
    measured_supply = config.supply_pressure
    setpoints = setpoints_at(config.schedule, 0.0)
    aborted = False

    for k in range(n_steps):
        t = k * config.dt_phys
        flows = plant.snapshot_flows(angles)

        if k % phys_per_primary == 0:
            setpoints = setpoints_at(config.schedule, t)
            # Sensor sampling happens at the primary rate; optional zero-mean
            # Gaussian noise is drawn in a fixed order for determinism.
            truth = {
                "ox_tank": plant.tanks["ox"].ullage.pressure,
                "fuel_tank": plant.tanks["fuel"].ullage.pressure,
                "ox_inj": flows.p_injector["ox"],
                "fuel_inj": flows.p_injector["fuel"],
            }
            measured_supply = plant.supply.pressure
            if rng is not None:
                measured_supply += config.noise_sigma * rng.standard_normal()
                for name in EREG_NAMES:
                    truth[name] += config.noise_sigma * rng.standard_normal()
            measured = truth

        if config.variant == "oracle":
            if k % phys_per_primary == 0:
                angles = _oracle_angles(config, plant, flows, setpoints)
                for name in EREG_NAMES:
                    locked = config.controllers[name].locked_angle
                    if locked is not None:
                        angles[name] = locked
        elif k % phys_per_secondary == 0:
            for name in EREG_NAMES:
                ctrl = controllers[name]
                if ctrl is None:
                    continue
                upstream = measured_supply if name in TANK_EREGS else measured[name.split("_")[0] + "_tank"]
                ctrl.step(
                    measured[name],
                    upstream,
                    setpoints.for_ereg(name),
                    t,
                    config.dt_secondary,
                )

        if k % (phys_per_primary * config.telemetry_decimation) == 0:
            frames.append(_make_frame(t, config, plant, flows, controllers, angles,
                                      measured, measured_supply, setpoints, events_active))

        # Over-pressure abort: valves must never see more than the configured
        # fraction of their rated pressure upstream.
        abort = plant.supply.pressure > config.abort_pressure_factor * min(
            config.valves[n].rated_pressure for n in TANK_EREGS
        )
        for side in ("ox", "fuel"):
            rating = config.valves[side + "_inj"].rated_pressure
            if plant.tanks[side].ullage.pressure > config.abort_pressure_factor * rating:
                abort = True
        if abort:
            if EVENT_ABORT not in events_active:
                events_active.append(EVENT_ABORT)
            abort_frame = _make_frame(t, config, plant, flows, controllers, angles,
                                      measured, measured_supply, setpoints, events_active)
            if frames and frames[-1].time_s == t:
                frames[-1] = abort_frame
            else:
                frames.append(abort_frame)
            aborted = True
            break

        new_events = plant.step(angles, config.dt_phys)
        if audit is not None:
            audit.record(plant)
        for event in new_events:
            if event not in events_active:
                events_active.append(event)

        for name in EREG_NAMES:
            ctrl = controllers[name]
            if ctrl is None:
                continue
            ctrl.actuator.step(ctrl.u2, config.dt_phys)
            angles[name] = ctrl.actuator.valve_angle

    if not frames and not aborted:
        raise EregSimError("run produced no telemetry frames")
    return frames


def _make_frame(t, config, plant, flows, controllers, angles, measured,
                measured_supply, setpoints, events_active) -> TelemetryFrame:
    eregs = {}
    for name in EREG_NAMES:
        ctrl = controllers[name]
        eregs[name] = EregFrame(
            setpoint_bar=setpoints.for_ereg(name) / 1e5,
            pressure_bar=measured[name] / 1e5,
            valve_angle_deg=angles[name],
            feedforward_deg=ctrl.last_feedforward if ctrl is not None else 0.0,
            u1_deg=ctrl.u1 if ctrl is not None else angles[name],
            u2=ctrl.u2 if ctrl is not None else 0.0,
        )
    mdot_fuel = flows.mdot_liquid["fuel"]
    frame = TelemetryFrame(
        time_s=t,
        ox_tank=eregs["ox_tank"],
        fuel_tank=eregs["fuel_tank"],
        ox_inj=eregs["ox_inj"],
        fuel_inj=eregs["fuel_inj"],
        supply_pressure_bar=measured_supply / 1e5,
        mdot_ox_kg_s=flows.mdot_liquid["ox"],
        mdot_fuel_kg_s=mdot_fuel,
        mdot_gas_kg_s=flows.mdot_gas["ox"] + flows.mdot_gas["fuel"],
        chamber_pressure_bar=flows.chamber_pressure / 1e5,
        thrust_n=flows.thrust,
        of_ratio=(flows.mdot_liquid["ox"] / mdot_fuel) if mdot_fuel > 0.0 else 0.0,
        events=tuple(events_active),
    )
    frame.validate()
    return frame


# ---------------------------------------------------------------------------
# Controller comparison harness


@dataclass(frozen=True)
class VariantResult:
    variant: str
    metrics: RegulationMetrics | None
    events: tuple[str, ...]
    error: str | None = None


@dataclass(frozen=True)
class ComparisonReport:
    scenario: str
    results: tuple[VariantResult, ...]

    def result(self, variant: str) -> VariantResult:
        for r in self.results:
            if r.variant == variant:
                return r
        raise KeyError(variant)

    def to_text(self) -> str:
        lines = [f"scenario: {self.scenario}"]
        header = f"{'variant':<10} {'ereg':<10} {'max|e| bar':>11} {'rms bar':>9} {'early p2p bar':>14}"
        lines.append(header)
        for r in self.results:
            if r.error is not None:
                lines.append(f"{r.variant:<10} run failed: {r.error}")
                continue
            for name in EREG_NAMES:
                m = r.metrics[name]
                lines.append(
                    f"{r.variant:<10} {name:<10} {m.max_abs_error:>11.3f} "
                    f"{m.rms_error:>9.3f} {m.peak_oscillation_amplitude:>14.3f}"
                )
        return "\n".join(lines)


def compare_controllers(config: ScenarioConfig, variants: list[str]) -> ComparisonReport:
    """Run each controller variant on the identical plant and seed."""
    if not variants:
        raise EregSimError("compare needs at least one variant")
    results = []
    for variant in variants:
        try:
            run_config = config.replace(variant=variant)
            frames = run_scenario(run_config)
            metrics = regulation_metrics(frames, run_config)
            results.append(
                VariantResult(variant, metrics, frames[-1].events if frames else ())
            )
        except EregSimError as exc:
            results.append(VariantResult(variant, None, (), error=str(exc)))
    return ComparisonReport(config.name, tuple(results))
