"""
Command-line entry point: evaluate, surface and verify

    python -m hestonopt.main evaluate --config run.json --v 0.16 --horizon 1
    python -m hestonopt.main surface --config run.json --out surface.csv
    python -m hestonopt.main verify --config run.json --which all --report report.json

Exit codes: 0 success, 1 failed verification check, 2 invalid input,
3 numerical failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from hestonopt.core.config import settings
from hestonopt.core.errors import (
    DomainError,
    EvaluationError,
    NumericalInstabilityError,
    ParameterValidationError,
)
from hestonopt.core.workflow import VerificationWorkflow
from hestonopt.models.schemas import EvaluationResult, RunConfig
from hestonopt.tools.heston_model import derive_constants
from hestonopt.tools.policy import evaluate_surface, optimal_control
from hestonopt.tools.reporting import write_csv, write_json, write_manifest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

POINT_FLAGS = {"w": "w", "x": "x", "v": "v", "t": "t", "horizon": "T"}
GRID_FLAGS = ("v_min", "v_max", "n_v", "tau_max", "n_tau", "stretching")
MC_FLAGS = ("n_paths", "n_steps", "seed", "scheme", "antithetic", "workers")
SECTION_FLAGS = {"evaluate": ("point",), "surface": ("grid",), "verify": ("point", "grid", "mc")}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hestonopt",
        description="Closed-form optimal investment under Heston stochastic volatility",
    )
    parser.add_argument("--log-level", default=None, help="Overrides HESTONOPT_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, type=Path, help="JSON config with model/utility/grid/mc/point")

    def point_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--w", type=float, help="Wealth")
        p.add_argument("--x", type=float, help="Asset price")
        p.add_argument("--v", type=float, help="Variance")
        p.add_argument("--t", type=float, help="Current time")
        p.add_argument("--horizon", type=float, help="Horizon T")

    def grid_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--v-min", type=float)
        p.add_argument("--v-max", type=float)
        p.add_argument("--n-v", type=int, help="Intervals in v")
        p.add_argument("--tau-max", type=float)
        p.add_argument("--n-tau", type=int, help="Intervals in tau")
        p.add_argument("--stretching", choices=["none", "geometric"])

    evaluate = sub.add_parser("evaluate", help="Value and control at one state")
    common(evaluate)
    point_flags(evaluate)
    evaluate.add_argument("--out", type=Path, help="JSON output file (stdout when omitted)")

    surface = sub.add_parser("surface", help="Value factor and control decomposition on a grid")
    common(surface)
    grid_flags(surface)
    surface.add_argument("--w", type=float, default=1.0)
    surface.add_argument("--x", type=float, default=1.0)
    surface.add_argument("--workers", type=int, default=1)
    surface.add_argument("--out", type=Path, required=True, help="CSV output file")

    verify = sub.add_parser("verify", help="Run the PDE and Monte Carlo verification suites")
    common(verify)
    grid_flags(verify)
    point_flags(verify)
    verify.add_argument("--which", choices=["pde", "mc", "all"], default="all")
    verify.add_argument("--report", type=Path, help="JSON report file (stdout when omitted)")
    verify.add_argument("--surface-out", type=Path, help="CSV of the Crank-Nicolson comparison")
    verify.add_argument("--samples-out", type=Path, help="CSV of the Monte Carlo per-path terminal samples")
    verify.add_argument("--n-paths", type=int)
    verify.add_argument("--n-steps", type=int, help="Steps per unit of tau")
    verify.add_argument("--seed", type=int)
    verify.add_argument("--scheme", choices=["full-truncation-euler", "exact-cir"])
    verify.add_argument("--antithetic", action="store_true", default=None)
    verify.add_argument("--workers", type=int)
    return parser


def _overrides(args: argparse.Namespace, names, mapping: Optional[Dict[str, str]] = None) -> Dict[str, Any]:
    out = {}
    for name in names:
        value = getattr(args, name, None)
        if value is not None:
            out[(mapping or {}).get(name, name)] = value
    return out


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Read the config file and apply flag overrides section by section."""
    data = json.loads(Path(args.config).read_text())
    for section, names, mapping in (
        ("point", POINT_FLAGS, POINT_FLAGS),
        ("grid", GRID_FLAGS, None),
        ("mc", MC_FLAGS, None),
    ):
        if section not in SECTION_FLAGS[args.command]:
            continue
        # a pde-only run never needs the mc section
        if section == "mc" and "mc" not in data and args.which == "pde":
            continue
        updates = _overrides(args, names, mapping)
        if updates:
            data[section] = {**(data.get(section) or {}), **updates}
    return RunConfig.model_validate(data)


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    if config.point is None:
        raise DomainError("evaluate needs a point: give a 'point' section or --v and --horizon")
    constants = derive_constants(config.model, config.utility)
    policy = optimal_control(config.point, config.utility, constants, config.model)
    result = EvaluationResult(point=config.point, policy=policy, constants=constants)
    write_json(result, args.out)
    if args.out is not None:
        write_manifest(args.out, "evaluate", config.model_dump(mode="json", by_alias=True), [args.config])
    return EXIT_OK


def cmd_surface(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    constants = derive_constants(config.model, config.utility)
    frame = evaluate_surface(
        config.model, config.utility, constants, config.grid, w=args.w, x=args.x, workers=args.workers
    )
    write_csv(frame, args.out)
    write_manifest(args.out, "surface", config.model_dump(mode="json", by_alias=True), [args.config])
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    derive_constants(config.model, config.utility)
    state = VerificationWorkflow().execute(config, which=args.which, keep_samples=args.samples_out is not None)
    report = state["report"]
    resolved = {**config.model_dump(mode="json", by_alias=True), "which": args.which}

    write_json(report, args.report)
    if args.report is not None:
        write_manifest(args.report, "verify", resolved, [args.config])
    if args.surface_out is not None and state.get("surface") is not None:
        write_csv(state["surface"], args.surface_out)
        write_manifest(args.surface_out, "verify", resolved, [args.config])
    if args.samples_out is not None and state.get("samples") is not None:
        write_csv(state["samples"], args.samples_out)
        write_manifest(args.samples_out, "verify", resolved, [args.config])
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


COMMANDS = {"evaluate": cmd_evaluate, "surface": cmd_surface, "verify": cmd_verify}


def _print_errors(messages: List[str]) -> None:
    for message in messages:
        print(f"error: {message}", file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level or settings.LOG_LEVEL,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except ParameterValidationError as e:
        logger.error(f"Invalid parameters: {e}")
        _print_errors(e.violations)
        return EXIT_INVALID
    except ValidationError as e:
        _print_errors([f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()])
        return EXIT_INVALID
    except (DomainError, FileNotFoundError, json.JSONDecodeError) as e:
        _print_errors([str(e)])
        return EXIT_INVALID
    except (EvaluationError, NumericalInstabilityError) as e:
        logger.error(f"Numerical failure: {e}")
        _print_errors([str(e)])
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
