"""Command-line front end: simulate, solve, campaign, speed-sweep, crlb."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .crlb import compute_crlb
from .gauss_newton import gauss_newton, random_init
from .harness import (
    CampaignConfig,
    emit_results,
    emit_run_records,
    render_summary,
    run_campaign,
    run_speed_sweep,
    sample_scenario,
)
from .measurement import TwoWayMeasurements, build_weights, simulate
from .model import Cube, Scenario, scenario_from_dict, scenario_to_dict
from .sdp import solve_sdp


def _load_config(path: str | None, overrides: dict) -> CampaignConfig:
    data = {}
    if path:
        data = json.loads(Path(path).read_text())
    data.update({k: v for k, v in overrides.items() if v is not None})
    return CampaignConfig.from_dict(data)


def _load_scenario(path: str) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def measurements_to_dict(m: TwoWayMeasurements, anchors, truth=None) -> dict:
    out = {
        "anchors": np.asarray(anchors, dtype=float).tolist(),
        "delays": m.delays.tolist(),
        "rho": m.rho.tolist(),
        "tau": m.tau.tolist(),
        "sigma_anchor": m.sigma_anchor.tolist(),
        "sigma_ud": m.sigma_ud,
    }
    if truth is not None:
        out["truth"] = {
            "position": truth.position.tolist(),
            "velocity": truth.velocity.tolist(),
            "clock_offset_m": truth.clock_offset,
            "clock_drift_mps": truth.clock_drift,
        }
    return out


def measurements_from_dict(data: dict) -> tuple[TwoWayMeasurements, np.ndarray, dict | None]:
    meas = TwoWayMeasurements(
        rho=np.asarray(data["rho"], dtype=float),
        tau=np.asarray(data["tau"], dtype=float),
        delays=np.asarray(data["delays"], dtype=float),
        sigma_anchor=np.asarray(data["sigma_anchor"], dtype=float),
        sigma_ud=float(data["sigma_ud"]),
    )
    return meas, np.asarray(data["anchors"], dtype=float), data.get("truth")


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON campaign config file")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--runs", type=int, help="Monte-Carlo runs per cell")
    p.add_argument("--methods", nargs="+", help="subset of sdp_m gauss_newton sdp_stationary")
    p.add_argument("--out", help="output CSV path (stdout when omitted)")
    p.add_argument("--per-run-dump", help="optional per-run CSV path")
    p.add_argument("--workers", type=int, help="parallel workers (default 1)")
    p.add_argument("--timing", action="store_true",
                   help="fill the mean_ms column (breaks byte-for-byte determinism)")
    p.add_argument("--verbose-solver", action="store_true",
                   help="print interior-point iteration traces")
    p.add_argument("--print-config", action="store_true",
                   help="print the effective config as JSON and exit")


def _overrides(args) -> dict:
    out = {
        "master_seed": args.seed,
        "runs": args.runs,
        "workers": args.workers,
    }
    if args.methods:
        out["methods"] = tuple(args.methods)
    if args.verbose_solver:
        out["verbose_solver"] = True
    return out


def _cmd_campaign(args) -> int:
    over = _overrides(args)
    if args.noise:
        over["noise_grid"] = tuple(args.noise)
    config = _load_config(args.config, over)
    if args.print_config:
        print(json.dumps(config.to_dict(), indent=2))
        return 0
    result = run_campaign(config)
    if args.out:
        emit_results(result.cells, args.out, include_timing=args.timing)
    else:
        from .harness import render_results

        sys.stdout.write(render_results(result.cells, include_timing=args.timing))
    sys.stderr.write(render_summary(result.cells))
    if args.per_run_dump:
        emit_run_records(result.run_records, args.per_run_dump)
    return 0


def _cmd_speed_sweep(args) -> int:
    config = _load_config(args.config, _overrides(args))
    if args.print_config:
        print(json.dumps(config.to_dict(), indent=2))
        return 0
    methods = tuple(args.methods) if args.methods else ("sdp_m", "sdp_stationary")
    result = run_speed_sweep(config, args.speeds, methods=methods)
    if args.out:
        emit_results(result.cells, args.out, include_timing=args.timing)
    else:
        from .harness import render_results

        sys.stdout.write(render_results(result.cells, include_timing=args.timing))
    sys.stderr.write(render_summary(result.cells))
    if args.per_run_dump:
        emit_run_records(result.run_records, args.per_run_dump)
    return 0


def _cmd_simulate(args) -> int:
    if args.scenario:
        scenario = _load_scenario(args.scenario)
    else:
        config = _load_config(args.config, {})
        rng = np.random.default_rng(args.seed)
        scenario = sample_scenario(config, rng, args.sigma)
    meas = simulate(scenario, args.seed)
    dump = measurements_to_dict(
        meas, scenario.anchor_positions(), truth=scenario.true_state()
    )
    _write_or_print(json.dumps(dump, indent=2), args.out)
    return 0


def _cmd_solve(args) -> int:
    meas, anchors, truth = measurements_from_dict(
        json.loads(Path(args.measurements).read_text())
    )
    from .interior_point import IpmSettings

    if args.method in ("sdp_m", "sdp_stationary"):
        motion = "moving" if args.method == "sdp_m" else "stationary"
        settings = IpmSettings(
            max_iter=50, tol_gap=1e-10, tol_feas=1e-7, verbose=args.verbose_solver
        )
        report = solve_sdp(meas, anchors, motion=motion, settings=settings)
        estimate = report.estimate
        payload = {
            "method": args.method,
            "status": report.status.value,
            "duality_gap": report.duality_gap,
            "tightness": report.tightness,
            "iterations": report.iterations,
            "wall_time_s": report.wall_time,
        }
    elif args.method == "gauss_newton":
        weights = build_weights(meas.sigma_anchor, meas.sigma_ud)
        center = np.mean(np.asarray(anchors, dtype=float), axis=0)
        if args.init is not None:
            from .model import StateVector

            init = StateVector(
                position=np.asarray(args.init, dtype=float),
                clock_offset=0.0,
                clock_drift=0.0,
                velocity=np.zeros(len(args.init)),
            )
        else:
            init = random_init(Cube(center, args.init_cube), args.init_seed)
        report = gauss_newton(meas, weights, anchors, meas.delays, init)
        estimate = report.estimate
        payload = {
            "method": args.method,
            "converged": report.converged,
            "iterations": report.iterations,
            "final_cost": report.final_cost,
            "step_norm": report.step_norm,
        }
    else:
        raise SystemExit(f"unknown method {args.method!r}")
    payload["estimate"] = {
        "position": estimate.position.tolist(),
        "velocity": estimate.velocity.tolist(),
        "clock_offset_m": estimate.clock_offset,
        "clock_drift_mps": estimate.clock_drift,
    }
    if truth:
        err = np.linalg.norm(estimate.position - np.asarray(truth["position"]))
        payload["position_error_m"] = float(err)
    _write_or_print(json.dumps(payload, indent=2), args.out)
    return 0


def _cmd_crlb(args) -> int:
    if args.scenario:
        scenario = _load_scenario(args.scenario)
    else:
        config = _load_config(args.config, {})
        rng = np.random.default_rng(args.seed)
        scenario = sample_scenario(config, rng, args.sigma)
    report = compute_crlb(scenario)
    payload = {
        "pos_rmse_bound_m": report.pos_rmse_bound,
        "threshold_m": report.threshold,
        "fim_condition": float(np.linalg.cond(report.fim)),
    }
    _write_or_print(json.dumps(payload, indent=2), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twotoa",
        description="Two-way TOA localization: SDP relaxation vs Gauss-Newton, "
        "with CRLB-scored Monte-Carlo campaigns.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("campaign", help="success-rate table over the noise grid")
    _add_common(p)
    p.add_argument("--noise", nargs="+", type=float, help="noise levels sigma in meters")
    p.set_defaults(func=_cmd_campaign)

    p = sub.add_parser("speed-sweep", help="position error versus device speed")
    _add_common(p)
    p.add_argument(
        "--speeds", nargs="+", type=float, default=[0.0, 15.0, 30.0, 45.0, 60.0]
    )
    p.set_defaults(func=_cmd_speed_sweep)

    p = sub.add_parser("simulate", help="one scenario -> measurement dump (JSON)")
    p.add_argument("--scenario", help="scenario JSON file (default: sampled)")
    p.add_argument("--config", help="campaign config for the sampled default")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.1, help="noise for sampled scenarios")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("solve", help="measurement dump + method -> estimate (JSON)")
    p.add_argument("--measurements", required=True, help="JSON dump from `simulate`")
    p.add_argument(
        "--method", default="sdp_m", choices=["sdp_m", "sdp_stationary", "gauss_newton"]
    )
    p.add_argument("--init", nargs="+", type=float, help="Gauss-Newton start position")
    p.add_argument("--init-seed", type=int, default=0)
    p.add_argument("--init-cube", type=float, default=700.0)
    p.add_argument("--verbose-solver", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("crlb", help="position-error bound for a scenario (JSON)")
    p.add_argument("--scenario", help="scenario JSON file (default: sampled)")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_crlb)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
