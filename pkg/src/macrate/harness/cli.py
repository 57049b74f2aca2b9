"""Command line entry point.

Exit codes: 0 when every asserted claim passes, 1 on a claim failure, 2 on a
configuration or argument error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..capacity import GaussianMacRegion, PowerProfile
from ..errors import ConfigError, DomainError, NonConvergenceError
from ..policies import avg_case_params, worst_case_params
from .config import load_config, run_experiment, write_outputs
from .verification import SIZES, SUITES, run_suite

EXIT_OK, EXIT_CLAIM, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("macrate")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the trace seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default=None, dest="fmt")
    common.add_argument("--debug-inflate", type=float, default=0.0, metavar="X",
                        help="add X to every tracking error before checking claims (negative control)")
    common.add_argument("-v", "--verbose", action="store_true")

    # argparse exits with 2 on bad arguments, matching the config-error code
    p = argparse.ArgumentParser(prog="macrate", description="Rate tracking on time-varying multiple-access channels.")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="run policies on a generated trace")
    sim.add_argument("--config", required=True, help="JSON experiment config")

    b = sub.add_parser("bounds", parents=[common], help="policy parameters and tracking bounds")
    b.add_argument("--A", type=float, required=True, dest="A")
    b.add_argument("--B", type=float, required=True, dest="B")
    b.add_argument("--what", type=float, required=True, help="ceiling of the region-step bound")
    b.add_argument("--wbar", type=float, required=True, help="mean of the region-step bound")

    pr = sub.add_parser("project", parents=[common], help="project a point onto a capacity region")
    pr.add_argument("--H", type=_floats, required=True, help="channel gains, comma separated")
    pr.add_argument("--P", type=_floats, required=True, help="powers, comma separated")
    pr.add_argument("--N0", type=float, default=1.0)
    pr.add_argument("--point", type=_floats, required=True)

    v = sub.add_parser("verify", parents=[common], help="run the registered claim checks")
    v.add_argument("--suite", choices=SUITES, default="all")
    v.add_argument("--size", choices=tuple(SIZES), default="full")
    v.add_argument("--claim", action="append", default=None, help="restrict to a claim id")
    return p


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out=args.out, fmt=args.fmt)
    result = run_experiment(cfg, inflate=args.debug_inflate)
    paths = write_outputs(result)
    for line in result.report.lines():
        print(line)
    print("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK if result.report.passed else EXIT_CLAIM


def cmd_bounds(args) -> int:
    wc = worst_case_params(args.A, args.B, args.what)
    ac = avg_case_params(args.A, args.B, args.wbar, args.what)
    rows = {
        "worst_case": {"k": wc.k, "alpha": wc.alpha, "theta": wc.theta, "w_prime": wc.w_prime,
                       "bound": wc.bound, "guaranteed": wc.guaranteed},
        "average_case": {"k": ac.k, "alpha": ac.alpha, "gamma": ac.gamma, "c": ac.c,
                         "bound": ac.bound, "guaranteed": ac.guaranteed},
    }
    if args.fmt == "json":
        print(json.dumps(rows, indent=2, sort_keys=True))
        return EXIT_OK
    keys = ["k", "alpha", "theta", "gamma", "c", "w_prime", "bound", "guaranteed"]
    print(f"{'':12s}{'worst_case':>24s}{'average_case':>24s}")
    for key in keys:
        cells = [_cell(rows[col].get(key)) for col in ("worst_case", "average_case")]
        print(f"{key:12s}{cells[0]:>24s}{cells[1]:>24s}")
    return EXIT_OK


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, (bool, int)):
        return str(v)
    return format(v, ".10g")


def cmd_project(args) -> int:
    if not (len(args.H) == len(args.P) == len(args.point)):
        raise ConfigError("--H, --P and --point need the same number of entries")
    region = GaussianMacRegion(PowerProfile(tuple(args.P), args.N0), args.H)
    y = np.asarray(args.point)
    approx = region.approximate_project(y)
    exact = region.exact_project(y)
    out = {
        "input": y.tolist(),
        "approximate": approx.tolist(),
        "oracle": exact.tolist(),
        "approximate_distance": float(np.linalg.norm(approx - y)),
        "oracle_distance": float(np.linalg.norm(exact - y)),
    }
    if args.fmt == "json":
        print(json.dumps(out, indent=2))
    else:
        fmt = lambda v: "(" + ", ".join(format(x, ".7g") for x in v) + ")"  # noqa: E731
        print(f"approximate {fmt(approx)}  distance {out['approximate_distance']:.7g}")
        print(f"oracle      {fmt(exact)}  distance {out['oracle_distance']:.7g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    report = run_suite(args.suite, args.size, inflate=args.debug_inflate, only=args.claim)
    if args.fmt == "json":
        sys.stdout.write(report.to_json())
    elif args.fmt == "csv":
        sys.stdout.write(report.to_csv())
    else:
        for line in report.lines():
            print(line)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verification.json").write_text(report.to_json())
    return EXIT_OK if report.passed else EXIT_CLAIM


COMMANDS = {"simulate": cmd_simulate, "bounds": cmd_bounds, "project": cmd_project, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_CLAIM


if __name__ == "__main__":
    sys.exit(main())
