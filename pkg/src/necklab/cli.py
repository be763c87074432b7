"""Command-line front end.

    necklab run --config bowl-n3 --out out/
    necklab decompose --config dumbbell-n3 --eps0 0.1 --eps1 0.05 --L 5
    necklab constants --n 3 --gamma1 0.1 --gamma2 0.1 --eta0 0.01 --eta2 0.01 --L 100

--config takes a YAML path or the name of a bundled scenario (see `necklab list`).
Exit codes: 0 success, 2 precondition failure, 3 check failure, 4 coverage.
"""

from __future__ import annotations

import argparse
import json
import sys

from .constants import ConstantBundle
from .scenario import (DIAGNOSTICS, EXIT_PRECONDITION, Scenario, ScenarioError, bundled_scenarios,
                       clean, dumps, load_scenario, run_scenario)

SURFACE_COMMANDS = ("simulate", "detect-necks", "decompose", "noncollapse", "gamma-estimate",
                    "parabolic-check")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="scenario YAML path or bundled scenario name")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", help="directory for reports, tables and the manifest")
    p.add_argument("--n", type=int, help="hypersurface dimension")
    p.add_argument("--L", type=float, help="neck half-length")
    p.add_argument("--eps0", type=float, help="neck tolerance")
    p.add_argument("--eps1", type=float, help="transition tolerance (< eps0)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="necklab", description=__doc__.split("\n\n")[0],
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run every diagnostic in a scenario")
    _common(p)
    for name in SURFACE_COMMANDS:
        p = sub.add_parser(name, help=f"run only the {name} diagnostic of a scenario")
        _common(p)
    p = sub.add_parser("models", help="closed-form spectra of the model solutions")
    _common(p)
    p.add_argument("--r0", type=float, default=1.0)
    p.add_argument("--t", type=float, default=0.0)
    p = sub.add_parser("constants", help="explicit constants as JSON")
    _common(p)
    for flag in ("--gamma1", "--gamma2", "--eta0", "--eta2"):
        p.add_argument(flag, type=float)
    p = sub.add_parser("oracle", help="two-frame minimiser oracle comparison")
    _common(p)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-6)
    sub.add_parser("list", help="list bundled scenarios")
    return ap


def _fail(reason: str, code: int = EXIT_PRECONDITION) -> int:
    print(json.dumps({"error": {"module": "cli_reporting", "operation": "validate",
                                "reason": reason, "code": code}}), file=sys.stderr)
    return code


def _standalone(args) -> Scenario:
    """Scenarios for commands that do not need a surface file."""
    n = args.n or 3
    if args.command == "models":
        diag = {"kind": "models", "r0": args.r0, "t": args.t}
    else:
        diag = {"kind": "oracle", "count": args.count, "tol": args.tol}
        if args.n:
            diag["n_values"] = [args.n]
    return Scenario(args.command, {"kind": "sphere", "n": n}, [diag],
                    seed=args.seed or 0).validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        print("\n".join(bundled_scenarios()))
        return 0
    try:
        if args.command == "constants" and args.config is None:
            vals = (args.gamma1, args.gamma2, args.eta0, args.eta2, args.L)
            if any(v is None for v in vals):
                return _fail("constants needs --gamma1 --gamma2 --eta0 --eta2 --L, or --config")
            b = ConstantBundle.build(args.n or 3, *vals)
            print(dumps(b.to_dict()), end="")
            return 0
        if args.command in ("models", "oracle") and args.config is None:
            sc = _standalone(args)
        else:
            if args.config is None:
                return _fail(f"{args.command} needs --config")
            sc = load_scenario(args.config)
            only = None if args.command == "run" else args.command
            if only is not None and only not in DIAGNOSTICS:
                return _fail(f"unknown diagnostic {only}")
            sc = sc.override(n=args.n, L=args.L, eps0=args.eps0, eps1=args.eps1,
                             seed=args.seed, only=only)
            if args.command == "constants":
                sc.diagnostics = [{**d, **{k: v for k, v in (("gamma1", args.gamma1),
                                                           ("gamma2", args.gamma2),
                                                           ("eta0", args.eta0),
                                                           ("eta2", args.eta2)) if v is not None}}
                                  for d in sc.diagnostics]
                sc.validate()
    except (ScenarioError, ValueError) as exc:
        return _fail(str(exc))

    out = args.out or sc.out
    res = run_scenario(sc, out)
    if args.command == "run":
        print(dumps(res.manifest), end="")
    else:
        body = res.reports.get(args.command)
        print(dumps(body if body is not None else {"errors": clean(res.errors)}), end="")
    for err in res.errors:
        print(json.dumps({"error": err}), file=sys.stderr)
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
