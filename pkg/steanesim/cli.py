"""
Command-line driver.

    python -m steanesim run --sequence PH --qec none --order 1
    python -m steanesim preset table1 --format json --out table1.json
    python -m steanesim diff a.json b.json --tolerance 1e-6

Exit codes: 0 success, 1 invalid input or config, 2 degenerate scenario,
3 diff out of tolerance.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from .app.config import settings
from .app.exceptions import ConfigError, DegenerateScenarioError, InputError, ReportSchemaError
from .app.models.schemas import ScenarioConfig, ScenarioFile
from .app.services.metrics import REPORT_GRID
from .app.services.report_writer import FORMATS, ReportWriter
from .app.services.scenario_runner import PRESETS, ScenarioRunner, diff_reports

logger = logging.getLogger("steanesim")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_DEGENERATE = 2
EXIT_DIFF = 3

# run flags that map one-to-one onto ScenarioConfig fields
_SCENARIO_FLAGS = {
    "sequence": "sequence",
    "qec": "qec",
    "order": "order",
    "metric": "metric",
    "oracle": "oracle",
    "oracle_rate": "oracle_rate",
    "samples": "samples",
    "seed": "seed",
    "fit_angles": "fit_angles",
    "allow_order_3": "allow_order_3",
}


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="steanesim",
        description="Fault-path fidelity polynomials for Steane-code gate sequences.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def engine_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--order", type=int, default=None, help="truncation order (default: settings DEFAULT_ORDER)")
        p.add_argument("--format", choices=FORMATS, default=None)
        p.add_argument("--out", type=Path, default=None, help="write the report here instead of stdout")
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--strategy", choices=("propagate", "paths"), default=None)
        p.add_argument("--timings", action="store_true", help="include wall times in JSON reports")
        p.add_argument("--allow-order-3", dest="allow_order_3", action="store_true", default=None)

    run = sub.add_parser("run", help="run one scenario or a config file of scenarios")
    run.add_argument("--config", type=Path, default=None, help="JSON scenario file; flags override its values")
    run.add_argument("--sequence", default=None, help='gate sequence in operator order, e.g. "PH" or "P-QEC-H"')
    run.add_argument("--qec", default=None, help="none, perfect, noisy, each, every:K, at:I,J, perfect-at:I,J")
    run.add_argument("--metric", choices=("state", "gate", "both"), default=None)
    run.add_argument("--alpha", type=float, action="append", default=None)
    run.add_argument("--beta", type=float, action="append", default=None)
    run.add_argument("--fit-angles", dest="fit_angles", action="store_true", default=None)
    run.add_argument("--oracle", choices=("off", "exhaustive", "monte-carlo"), default=None)
    run.add_argument("--oracle-rate", dest="oracle_rate", type=float, default=None)
    run.add_argument("--samples", type=int, default=None)
    run.add_argument("--seed", type=int, default=None, help="Monte Carlo oracle only")
    run.add_argument("--no-snap", dest="snap", action="store_false", default=None)
    engine_flags(run)

    preset = sub.add_parser("preset", help="run a built-in table")
    preset.add_argument("name", choices=PRESETS)
    engine_flags(preset)

    diff = sub.add_parser("diff", help="compare two JSON reports coefficient by coefficient")
    diff.add_argument("a", type=Path)
    diff.add_argument("b", type=Path)
    diff.add_argument("--tolerance", type=float, default=None)
    diff.add_argument("--format", choices=("text", "json"), default="text")
    diff.add_argument("--out", type=Path, default=None)

    return parser.parse_args(argv)


def _angles(args: argparse.Namespace) -> Optional[List[List[float]]]:
    if args.alpha is None and args.beta is None:
        return [list(p) for p in REPORT_GRID] if args.fit_angles else None
    alphas = args.alpha or [0.0]
    betas = args.beta or [0.0] * len(alphas)
    if len(betas) == 1 and len(alphas) > 1:
        betas = betas * len(alphas)
    if len(alphas) != len(betas):
        raise ConfigError("Mismatched angles", [f"--alpha given {len(alphas)} time(s), --beta {len(betas)} time(s)"])
    return [[a, b] for a, b in zip(alphas, betas)]


def _load_config_file(path: Path) -> Dict[str, Any]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}", [str(e)]) from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON", [f"line {e.lineno}, column {e.colno}: {e.msg}"]) from None
    if isinstance(data, dict) and "scenarios" not in data:
        data = {"scenarios": [data]}
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    return data


def _diagnostics(error: ValidationError) -> List[str]:
    return [f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in error.errors()]


def _build_run(args: argparse.Namespace):
    """Scenario configs plus the shared engine options; flags win over the file."""
    overrides = {field: getattr(args, flag) for flag, field in _SCENARIO_FLAGS.items() if getattr(args, flag) is not None}
    if args.snap is not None:
        overrides["snap"] = args.snap
    angles = _angles(args)
    if angles is not None:
        overrides["angles"] = angles

    if args.config is not None:
        data = _load_config_file(args.config)
        data["scenarios"] = [{**s, **overrides} if isinstance(s, dict) else s for s in data.get("scenarios", [])]
        try:
            body = ScenarioFile.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"Invalid config file {args.config}", _diagnostics(e)) from None
        return (
            body.scenarios,
            args.strategy or body.strategy,
            args.jobs if args.jobs is not None else body.jobs,
            args.format or body.format or "markdown",
        )

    if "sequence" not in overrides:
        raise ConfigError("Nothing to run", ["give --sequence or --config"])
    try:
        config = ScenarioConfig.model_validate(overrides)
    except ValidationError as e:
        raise ConfigError("Invalid scenario", _diagnostics(e)) from None
    return [config], args.strategy, args.jobs, args.format or "markdown"


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")
        logger.info("wrote %s", out)


def _run(args: argparse.Namespace) -> int:
    configs, strategy, jobs, fmt = _build_run(args)
    bundle = ScenarioRunner.run_bundle(configs, strategy=strategy, jobs=jobs, timings=args.timings)
    _emit(ReportWriter.render(bundle, fmt), args.out)
    return EXIT_OK


def _preset(args: argparse.Namespace) -> int:
    bundle = ScenarioRunner.run_preset(
        args.name,
        order=args.order,
        strategy=args.strategy,
        jobs=args.jobs,
        timings=args.timings,
        allow_order_3=bool(args.allow_order_3),
    )
    _emit(ReportWriter.render(bundle, args.format or "markdown"), args.out)
    return EXIT_OK


def _diff(args: argparse.Namespace) -> int:
    try:
        left = args.a.read_text(encoding="utf-8")
        right = args.b.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError("Cannot read report", [str(e)]) from None
    result = diff_reports(left, right, args.tolerance)
    if args.format == "json":
        text = result.model_dump_json(indent=2, exclude_none=True) + "\n"
    else:
        text = ReportWriter.diff_to_text(result)
    _emit(text, args.out)
    return EXIT_OK if result.ok else EXIT_DIFF


def configure_logging() -> None:
    logging.basicConfig(
        level=settings.LOG_LEVEL.upper(),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = _parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2, which is reserved for degenerate scenarios
        return EXIT_OK if e.code in (0, None) else EXIT_INVALID
    configure_logging()
    handlers = {"run": _run, "preset": _preset, "diff": _diff}
    try:
        return handlers[args.command](args)
    except DegenerateScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ConfigError, InputError, ReportSchemaError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except ValidationError as e:
        print("error: invalid input\n" + "\n".join(f"  - {d}" for d in _diagnostics(e)), file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())
