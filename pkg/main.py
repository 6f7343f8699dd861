"""
toricma command line
Transported Monge-Ampère solves, Legendre transforms, toric checks and
verification suites for convex functions on polytopes

Exit codes: 0 ok, 1 internal error, 2 invalid input, 3 no convergence,
4 verification failed
"""
import argparse
import json
import sys
from typing import List, Optional

from workflow import COMMANDS, RunConfig, run
from utils import settings, setup_logging
from utils.error_handling import EXIT_OK, handle_exception


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toricma",
        description="Semi-discrete transported Monge-Ampère solver and convex-analysis toolkit",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument(
        "action",
        nargs="?",
        choices=["check"],
        help="sub-action for 'toric' (only 'check')",
    )
    parser.add_argument("--polytope", help="polytope.json")
    parser.add_argument("--density", help="density.json")
    parser.add_argument("--target", help="measure.json with the target atoms")
    parser.add_argument("--input", help="PL function (.json) or samples (.csv) for 'legendre'")
    parser.add_argument("--potential", help="potential for 'toric check' (.json or .csv)")
    parser.add_argument("--solution", help="stored solution.json to re-verify")
    parser.add_argument("--suite", help="verification suite")
    parser.add_argument("--name", help="example name")
    parser.add_argument("--tol", type=float)
    parser.add_argument("--max-iter", type=int, dest="max_iter")
    parser.add_argument("--grid-radius", type=float, dest="grid_radius")
    parser.add_argument("--grid-res", type=int, dest="grid_res")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory (default: current directory)")
    parser.add_argument("--json-errors", action="store_true", dest="json_errors")
    parser.add_argument(
        "--log-level",
        default=settings.LOG_LEVEL,
        help="DEBUG, INFO, WARNING, ERROR",
    )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(level=args.log_level, json_format=settings.LOG_JSON)

    try:
        config = RunConfig.from_args(
            command=args.command,
            polytope=args.polytope,
            density=args.density,
            target=args.target,
            input=args.input,
            potential=args.potential,
            solution=args.solution,
            suite=args.suite,
            name=args.name,
            tol=args.tol,
            max_iter=args.max_iter,
            grid_radius=args.grid_radius,
            grid_res=args.grid_res,
            seed=args.seed,
            out=args.out,
        )
        result = run(config)
    except Exception as exc:  # every failure maps to an exit code
        return handle_exception(exc, json_errors=args.json_errors)

    sys.stdout.write(json.dumps(result, default=str, sort_keys=True) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
