#!/usr/bin/env python3
from __future__ import annotations

import argparse
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))


def _overrides(args: argparse.Namespace) -> dict:
    return {"step": args.grid_h, "horizon": args.horizon, "seed": args.seed}


def _config_command(sub, name: str, help_text: str) -> argparse.ArgumentParser:
    parser = sub.add_parser(name, help=help_text)
    parser.add_argument("--config", required=True, help="Kernel config YAML")
    parser.add_argument("--out", help="Output directory (default: outputs.root_dir/<command>-<hash>)")
    parser.add_argument("--grid-h", type=float, help="Override grid step")
    parser.add_argument("--horizon", type=float, help="Override grid horizon")
    parser.add_argument("--seed", type=int, help="Override seed")
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Semi-Markov and memory-kernel quantum dynamics")
    parser.add_argument("--log-level", help="Logging level (default from settings)")
    sub = parser.add_subparsers(dest="command", required=True)

    evolve = _config_command(sub, "evolve", "Write T_mn(t) or rho(t) time series")
    evolve.add_argument("--dyson", action="store_true", help="Also sum the Dyson series and report its deviation")
    _config_command(sub, "check-cp", "Run the complete-positivity conditions")
    simulate = _config_command(sub, "simulate", "Monte Carlo occupations of a classical config")
    simulate.add_argument("--threads", type=int, help="Worker threads for trajectory blocks")

    scan = sub.add_parser("scan", help="Scan the sign of Delta over (r_minus, r_plus)")
    scan.add_argument("--tau", type=float, help="Rescaled time gamma*t")
    scan.add_argument("--resolution", type=int, help="Grid points per axis")
    scan.add_argument("--mode", choices=["region", "slice", "sufficiency"], default="region")
    scan.add_argument("--threads", type=int, help="Worker threads for scan rows")
    scan.add_argument("--out", help="Output directory")

    validate = sub.add_parser("validate", help="Run the oracle suite")
    validate.add_argument("--out", help="Write validation.json here")
    validate.add_argument("--tolerance-scale", type=float, default=1.0, help="Multiply every tolerance")
    validate.add_argument("--check", action="append", help="Run only the named check (repeatable)")

    status = sub.add_parser("status", help="List indexed runs of a config")
    status.add_argument("--config", required=True, help="Kernel config YAML")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    from qsmp.core import orchestrator
    from qsmp.core.errors import QsmpError
    from qsmp.core.settings import load_settings
    from tools._common import configure_logging, print_json, report_errors

    settings = load_settings()
    configure_logging(settings, args.log_level)

    if args.command == "status":
        try:
            print_json(orchestrator.run_status(args.config, settings))
        except QsmpError as exc:
            print(f"{exc.code}: {exc.message}", file=sys.stderr)
            return 2
        return 0

    if args.command == "evolve":
        outcome = orchestrator.cmd_evolve(args.config, args.out, _overrides(args), settings, dyson=args.dyson)
    elif args.command == "check-cp":
        outcome = orchestrator.cmd_check_cp(args.config, args.out, _overrides(args), settings)
    elif args.command == "simulate":
        outcome = orchestrator.cmd_simulate(args.config, args.out, _overrides(args), args.threads, settings)
    elif args.command == "scan":
        outcome = orchestrator.cmd_scan(args.tau, args.resolution, args.out, args.mode, args.threads, settings)
    else:
        outcome = orchestrator.cmd_validate(args.out, args.tolerance_scale, args.check, settings)
        for check in outcome.summary.get("checks", []):
            verdict = "PASS" if check["passed"] else "FAIL"
            print(f"{verdict} {check['name']}: measured {check['measured']:.3e} tolerance {check['tolerance']:.3e}")

    report_errors(outcome)
    if args.command != "validate":
        print_json(outcome)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
