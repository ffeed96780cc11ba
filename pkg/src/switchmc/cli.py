"""Command line entry point: ``switchmc run|validate|presets``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .io_utils import dumps_json
from .operator_model import ClassParamsError
from .presets import list_presets
from .scenario import (
    EXIT_INVALID,
    EXIT_OK,
    ScenarioError,
    ValidationFailure,
    default_out_dir,
    load_scenario,
    run_scenario,
    run_validation,
)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="switchmc", description="Monte Carlo checks for regime-switching jump diffusions.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="validate and run every experiment of a scenario")
    run.add_argument("config", help="scenario file (TOML) or a report.json to replay")
    run.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--out", default=None, help="output directory (default: $SWITCHMC_OUT/<id>)")
    run.add_argument("--trace", type=int, default=None, metavar="N", help="dump N single-path traces")

    val = sub.add_parser("validate", help="parse a scenario and check the class conditions only")
    val.add_argument("config")
    val.add_argument("--seed", type=int, default=None)

    pre = sub.add_parser("presets", help="list the preset catalog")
    pre.add_argument("--json", action="store_true", help="machine-readable output")
    return p


def _print_presets(as_json: bool) -> None:
    catalog = list_presets()
    if as_json:
        sys.stdout.write(dumps_json(catalog))
        return
    for entry in catalog:
        print(f"{entry['id']}: {entry['description']}")
        params = ", ".join(f"{k}={v['default']}" for k, v in entry["parameters"].items()) or "-"
        print(f"    parameters: {params}")
        print(f"    conditions: {', '.join(entry['conditions'])}")


def _summary(report: dict) -> None:
    for exp in report["experiments"]:
        status = "PASS" if exp["passed"] else "FAIL"
        print(f"[{status}] {exp['id']} ({exp['kind']})")
        for row in exp["rows"]:
            if row["pass"] is False:
                print(f"    r={row['radius']} {row['statistic']} = {row['value']}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.verb == "presets":
        _print_presets(args.json)
        return EXIT_OK
    try:
        scenario = load_scenario(args.config)
        if args.seed is not None:
            scenario = scenario.with_seed(args.seed)
        if args.verb == "validate":
            coeffs, params = scenario.build()
            rep = run_validation(scenario, coeffs, params)
            sys.stdout.write(dumps_json(rep))
            return EXIT_OK if rep["passed"] else EXIT_INVALID
        out = Path(args.out) if args.out else default_out_dir(scenario)
        result = run_scenario(scenario, workers=args.workers, out_dir=out, trace=args.trace,
                              argv=sys.argv if argv is None else list(argv))
    except (ScenarioError, ClassParamsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValidationFailure as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    _summary(result.report)
    print(f"report: {result.out_dir / 'report.json'}")
    return result.status


if __name__ == "__main__":
    sys.exit(main())
