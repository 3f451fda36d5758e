"""Command-line entry point: ``calibra run|scenario|check|expr``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from calibra.checks import CheckNotApplicableError, UnknownCheckError, check_ids
from calibra.config import ConfigError, load_config
from calibra.expr import ExpressionError, parse_expression
from calibra.manifold import ScalarField
from calibra.report import EXIT_CONFIG, run_scenario
from calibra.scenarios import UnknownScenarioError, describe, load_scenario


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="calibra", description="Numerical checks for calibrated "
                                 "plurisubharmonicity and Riemannian submersions.")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a JSON configuration")
    run.add_argument("config")
    run.add_argument("--out", help="write the JSON report here instead of stdout")

    scen = sub.add_parser("scenario", help="scenario catalog")
    scen.add_argument("action", choices=["list"])

    chk = sub.add_parser("check", help="run checks on a catalog scenario")
    chk.add_argument("scenario")
    chk.add_argument("--checks", type=_names, help=f"comma-separated ids from: {', '.join(check_ids())}")
    chk.add_argument("--tol", type=float, help="tolerance for every conclusion record")
    chk.add_argument("--grid", type=int)
    chk.add_argument("--seed", type=int, default=0)
    chk.add_argument("--out")

    ex = sub.add_parser("expr", help="expression utilities")
    ex.add_argument("action", choices=["eval"])
    ex.add_argument("expression")
    ex.add_argument("--at", type=_floats, required=True, help="point, e.g. 1,2")
    ex.add_argument("--jet", type=int, choices=[0, 1, 2], default=0,
                    help="0: value, 1: with gradient, 2: with Hessian")
    return ap


def _emit(report, out) -> int:
    if out:
        Path(out).write_text(report.to_json(), encoding="utf-8")
        print("\n".join(report.summary_lines()))
    else:
        sys.stdout.write(report.to_json())
    return report.exit_code


def _expr_eval(args) -> int:
    ex = parse_expression(args.expression)
    p = np.asarray(args.at, float)
    if ex.nvars > len(p):
        print(f"error: expression uses {ex.nvars} variables, point has {len(p)}", file=sys.stderr)
        return EXIT_CONFIG
    f = ScalarField(ex, len(p), ex.pretty())
    out = {"expression": ex.pretty(), "at": p.tolist()}
    if args.jet == 0:
        out["value"] = float(f(p))
    else:
        v, g, h = f.eval(p)
        out["value"] = float(v)
        out["gradient"] = np.asarray(g, float).tolist()
        if args.jet == 2:
            out["hessian"] = np.asarray(h, float).tolist()
    print(json.dumps(out, indent=2))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "scenario":
            for sid, text in describe():
                print(f"{sid:15s} {text}")
            return 0
        if args.command == "expr":
            return _expr_eval(args)
        if args.command == "run":
            cfg = load_config(args.config)
            report = run_scenario(cfg.scenario, cfg.checks, cfg.seed, cfg.grid, cfg.tolerances, cfg.tolerance)
            return _emit(report, args.out)
        sc = load_scenario(args.scenario)
        report = run_scenario(sc, args.checks, args.seed, args.grid, tolerance=args.tol)
        return _emit(report, args.out)
    except (ConfigError, UnknownScenarioError, UnknownCheckError, CheckNotApplicableError,
            ExpressionError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
