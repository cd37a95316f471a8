"""Deterministic simulator for electronically regulated pressure-fed
rocket feed systems: plant physics, cascaded regulator controllers,
scenario tooling, calibration fits and a command-line runner."""

from .control import (
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
from .engine import ComparisonReport, compare_controllers, run_scenario
from .errors import (
    ConfigError,
    ControllerError,
    DegenerateFitError,
    EregSimError,
    InfeasibleThrottleError,
    ModelError,
    UndefinedRatioError,
)
from .fluids import (
    ChamberModel,
    GasTankState,
    LineModel,
    PropellantTankState,
    ValveModel,
    chamber_state,
    choked_gas_mass_flow,
    cv_of_angle,
    darcy_weisbach_dp,
    liquid_volumetric_flow,
    orifice_mass_flow,
    step_gas_tank,
    step_propellant_tank,
)
from .scenario import (
    ScenarioConfig,
    SetpointSchedule,
    ThrottleProfile,
    load_scenario,
    of_ratio,
    paired_setpoints_for_of,
    setpoints_at,
    size_mock_injector,
)
from .telemetry import (
    RegulationMetrics,
    TelemetryFrame,
    emit_telemetry,
    read_telemetry,
    regulation_metrics,
)

__version__ = "0.1.0"
