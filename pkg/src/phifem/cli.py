"""Command-line driver: ``phifem <subcommand> [--config file.json] [overrides]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .linalg import SolverError
from .study import DEFAULT_PARAM_GRID, DEFAULT_THETA_GRID, STUDIES, ConfigError, StudyConfig, StudyError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of numbers, got {text!r}") from None


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of integers, got {text!r}") from None


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with StudyConfig fields")
    parser.add_argument("--case", help="test case name (flower, flower-robin, rectangle, ball, constant)")
    parser.add_argument("--k", type=int, help="polynomial degree of u_h")
    parser.add_argument("--l", type=int, help="polynomial degree of phi_h")
    parser.add_argument("--sigma", type=float, help="ghost penalty weight")
    parser.add_argument("--gamma", type=float, help="sets gamma_div = gamma_u = gamma_p")
    parser.add_argument("--alpha", type=float, help="Robin coefficient")
    parser.add_argument("--levels", type=_int_list, help="mesh levels n, e.g. 8,16,32")
    parser.add_argument("--theta0", type=float, help="rotation angle of the domain")
    parser.add_argument("--out-csv", dest="out_csv", help="write rows as CSV")
    parser.add_argument("--out-json", dest="out_json", help="write the full report as JSON")
    parser.add_argument("--cond", action="store_true", default=None, help="estimate the 2-norm condition number")
    parser.add_argument("--patch", action="store_true", default=None, help="add level-set diagnostics to rows")
    parser.add_argument("--sampling", choices=("lattice", "vertices"), help="cell classification rule")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phifem", description="phi-FEM studies for -Δu + u = f")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("solve", "solve at the finest level"),
        ("convergence", "refinement study with fitted rates"),
        ("sweep-angle", "errors against theta0"),
        ("sweep-param", "errors against sigma or gamma"),
        ("condition", "condition number against h"),
        ("robin", "convergence and conditioning for the Robin variant"),
    ):
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name in ("sweep-angle", "sweep-param"):
            p.add_argument("--grid", type=_float_list, help="sweep values, e.g. 0,0.1,0.2")
        if name == "sweep-param":
            p.add_argument("--param", choices=("sigma", "gamma"), default=None, help="swept parameter")
    return parser


def config_from_args(args) -> StudyConfig:
    data = {}
    if args.config:
        data = StudyConfig.from_json(args.config).__dict__.copy()
    for key in ("case", "k", "l", "sigma", "alpha", "levels", "theta0", "out_csv", "out_json", "cond", "patch", "sampling"):
        v = getattr(args, key)
        if v is not None:
            data[key] = v
    if args.gamma is not None:
        data.update(gamma_div=args.gamma, gamma_u=args.gamma, gamma_p=args.gamma)
    if args.command == "sweep-angle":
        data["sweep"] = "theta0"
    elif args.command == "sweep-param":
        axis = args.param or (data.get("sweep") if data.get("sweep") in ("sigma", "gamma") else "sigma")
        data["sweep"] = axis
    if getattr(args, "grid", None) is not None:
        data["grid"] = args.grid
    if data.get("sweep", "none") != "none" and not data.get("grid"):
        data["grid"] = list(DEFAULT_THETA_GRID if data["sweep"] == "theta0" else DEFAULT_PARAM_GRID)
    return StudyConfig.from_dict(data)


def _print_report(report) -> None:
    cols = ("case", "n", "h", "theta0", "sigma", "gamma_u", "err_L2_rel", "err_H1_rel", "cond2")
    print("  ".join(f"{c:>11}" for c in cols))
    for r in report.rows:
        cells = []
        for c in cols:
            v = r[c]
            cells.append(f"{v:>11.4e}" if isinstance(v, float) else f"{v!s:>11}")
        print("  ".join(cells))
    if report.summary:
        print(json.dumps(report.to_dict()["summary"], indent=2))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = STUDIES[args.command](cfg)
    except (StudyError, SolverError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    try:
        report.write(cfg.out_csv, cfg.out_json)
    except OSError as exc:
        print(f"config error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _print_report(report)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
