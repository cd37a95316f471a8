"""Command-line interface.

Subcommands: run, metrics, compare, calibrate (cv|gamma|choked),
size-injector. Exit code 0 on success; nonzero on validation failure or
an aborted run, with a machine-readable JSON error line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import calibration
from .engine import EVENT_ABORT, compare_controllers, run_scenario
from .errors import EregSimError
from .scenario import EREG_NAMES, load_scenario, size_mock_injector
from .telemetry import emit_telemetry, read_telemetry, regulation_metrics
from .units import bar_to_pa

EXIT_OK = 0
EXIT_ERROR = 2
EXIT_ABORT = 3


def _fail(code: str, message: str) -> int:
    print(json.dumps({"error": code, "message": message}), file=sys.stderr)
    return EXIT_ERROR


def _metrics_lines(metrics) -> list[str]:
    lines = [
        f"{'ereg':<10} {'max|e| bar':>11} {'rms bar':>9} {'settle s':>9} "
        f"{'overshoot bar':>14} {'early p2p bar':>14}"
    ]
    for name in EREG_NAMES:
        m = metrics[name]
        lines.append(
            f"{name:<10} {m.max_abs_error:>11.3f} {m.rms_error:>9.3f} {m.settle_time:>9.2f} "
            f"{m.overshoot:>14.3f} {m.peak_oscillation_amplitude:>14.3f}"
        )
    return lines


def _cmd_run(args) -> int:
    config = load_scenario(args.scenario)
    if args.controller:
        config = config.replace(variant=args.controller)
    if args.seed is not None:
        config = config.replace(noise_seed=args.seed)
    frames = run_scenario(config)
    emit_telemetry(frames, args.out)
    aborted = frames and EVENT_ABORT in frames[-1].events
    print(f"wrote {len(frames)} frames to {args.out}")
    if aborted:
        print(
            json.dumps({"error": "abort", "message": "run ended in over-pressure abort"}),
            file=sys.stderr,
        )
        return EXIT_ABORT
    return EXIT_OK


def _cmd_metrics(args) -> int:
    config = load_scenario(args.scenario)
    frames = read_telemetry(args.telemetry)
    metrics = regulation_metrics(frames, config)
    if args.json:
        payload = {
            name: vars(metrics[name]) for name in EREG_NAMES
        }
        print(json.dumps(payload, indent=2))
    else:
        print("\n".join(_metrics_lines(metrics)))
    return EXIT_OK


def _cmd_compare(args) -> int:
    config = load_scenario(args.scenario)
    report = compare_controllers(config, args.variants)
    print(report.to_text())
    failed = [r.variant for r in report.results if r.error is not None]
    if failed:
        return _fail("compare", f"variants failed: {', '.join(failed)}")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    frames = read_telemetry(args.data)
    if args.kind == "cv":
        if args.phase == "liquid":
            if args.density is None:
                return _fail("calibrate", "liquid Cv calibration needs --density")
            raw = calibration.liquid_samples_from_telemetry(frames, args.side, args.density)
            pairs = []
            for s in raw:
                try:
                    pairs.append((s.valve_angle, calibration.cv_from_sample(s)))
                except ValueError:
                    continue  # no-drop samples carry no Cv information
        else:
            if args.choked_constant is None:
                return _fail("calibrate", "gas Cv calibration needs --choked-constant")
            raw = calibration.gas_samples_from_telemetry(frames, args.side)
            pairs = [
                (s.valve_angle, calibration.cv_from_sample(s, args.choked_constant))
                for s in raw
            ]
        fit = calibration.fit_cv_curve(pairs)
        calibration.write_fit_result(
            args.out,
            "cv_curve",
            {
                "alpha_si_per_deg": fit.alpha,
                "theta_zero_deg": fit.theta_zero,
                "residual_rms": fit.residual_rms,
                "sample_count": fit.sample_count,
            },
        )
    elif args.kind == "gamma":
        records = calibration.steady_records(frames, args.side + "_tank")
        gamma = calibration.fit_gamma(records, args.theta_zero)
        residuals = [
            angle - args.theta_zero - gamma * min(1.0, s / p) for angle, s, p in records
        ]
        calibration.write_fit_result(
            args.out,
            "gamma",
            {
                "gamma_deg": gamma,
                "residual_rms": (sum(r * r for r in residuals) / len(residuals)) ** 0.5,
                "sample_count": len(records),
            },
        )
    else:  # choked
        samples = calibration.gas_samples_from_telemetry(frames, args.side)
        k = calibration.fit_choked_constant(samples, args.alpha, args.theta_zero)
        residuals = [
            s.flow - k * max(0.0, args.alpha * (s.valve_angle - args.theta_zero)) * s.upstream_pressure
            for s in samples
        ]
        calibration.write_fit_result(
            args.out,
            "choked_constant",
            {
                "choked_constant": k,
                "residual_rms": (sum(r * r for r in residuals) / len(residuals)) ** 0.5,
                "sample_count": len(samples),
            },
        )
    print(f"wrote fit result to {args.out}")
    return EXIT_OK


def _cmd_size_injector(args) -> int:
    config = load_scenario(args.scenario)
    upstream = bar_to_pa(args.upstream_bar) if args.upstream_bar else config.tank_setpoint(args.side)
    downstream = bar_to_pa(args.downstream_bar) if args.downstream_bar else config.ambient_pressure
    area = size_mock_injector(
        target_mdot=args.target_mdot,
        rho=config.tanks[args.side].liquid_density,
        upstream=upstream,
        downstream=downstream,
        cd=args.cd,
    )
    print(f"{args.side} mock injector area: {area:.6e} m2")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eregsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write telemetry CSV")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--controller", choices=["pid", "ff", "ff+dyn", "oracle"])
    p_run.add_argument("--seed", type=int)
    p_run.set_defaults(func=_cmd_run)

    p_metrics = sub.add_parser("metrics", help="regulation metrics from a telemetry CSV")
    p_metrics.add_argument("--telemetry", required=True)
    p_metrics.add_argument("--scenario", required=True)
    p_metrics.add_argument("--json", action="store_true")
    p_metrics.set_defaults(func=_cmd_metrics)

    p_compare = sub.add_parser("compare", help="run controller variants side by side")
    p_compare.add_argument("--scenario", required=True)
    p_compare.add_argument("--variants", nargs="+", required=True,
                           choices=["pid", "ff", "ff+dyn", "oracle"])
    p_compare.set_defaults(func=_cmd_compare)

    p_cal = sub.add_parser("calibrate", help="fit model parameters from telemetry")
    p_cal.add_argument("kind", choices=["cv", "gamma", "choked"])
    p_cal.add_argument("--data", required=True)
    p_cal.add_argument("--out", required=True)
    p_cal.add_argument("--side", choices=["ox", "fuel"], default="ox")
    p_cal.add_argument("--phase", choices=["liquid", "gas"], default="liquid")
    p_cal.add_argument("--density", type=float)
    p_cal.add_argument("--choked-constant", type=float)
    p_cal.add_argument("--alpha", type=float, default=0.0)
    p_cal.add_argument("--theta-zero", type=float, default=0.0)
    p_cal.set_defaults(func=_cmd_calibrate)

    p_size = sub.add_parser("size-injector", help="size a mock injector orifice")
    p_size.add_argument("--scenario", required=True)
    p_size.add_argument("--target-mdot", type=float, required=True)
    p_size.add_argument("--side", choices=["ox", "fuel"], default="ox")
    p_size.add_argument("--upstream-bar", type=float)
    p_size.add_argument("--downstream-bar", type=float)
    p_size.add_argument("--cd", type=float, default=0.7)
    p_size.set_defaults(func=_cmd_size_injector)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EregSimError as exc:
        return _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
