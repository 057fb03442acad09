"""Command-line entry point.

Exit codes: 0 all checks pass, 1 a check failed (or a scenario raised), 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys

COMMANDS = {
    "check-theta": "theta-check",
    "build-cutoff": "cutoff",
    "kernel-verify": "kernel-verify",
    "resolvent-sweep": "resolvent-sweep",
    "born-series": "born-series",
    "lap-check": "lap-check",
    "wave-decay": "wave-decay",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _common(p):
    p.add_argument("--config", metavar="PATH", help="JSON experiment config")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides DECAYLAB_OUT)")
    p.add_argument("--seed", type=int, help="random seed for norm estimation")
    p.add_argument("--threads", type=int, help="BLAS thread count")
    p.add_argument("--s", type=float, help="profile exponent s")


def build_parser():
    parser = _Parser(prog="decaylab", description="Weighted resolvent and local energy decay experiments.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        _common(sub.add_parser(name, help=f"run the {COMMANDS[name]} scenario"))
    rep = sub.add_parser("report", help="aggregate run manifests")
    rep.add_argument("--dir", required=True, metavar="DIR")
    rep.add_argument("--csv", metavar="PATH", help="also write the summary table as CSV")
    return parser


def _set_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    if getattr(args, "threads", None):
        _set_threads(args.threads)  # before numpy is loaded

    from decaylab import expyard

    if args.command == "report":
        if not os.path.isdir(args.dir):
            print(f"decaylab: no such directory: {args.dir}", file=sys.stderr)
            return 2
        rows, text, ok = expyard.report(args.dir, args.csv)
        print(text)
        return 0 if ok else 1

    scenario = COMMANDS[args.command]
    try:
        if args.config:
            if not os.path.isfile(args.config):
                print(f"decaylab: config not found: {args.config}", file=sys.stderr)
                return 2
            cfg = expyard.ExperimentConfig.load(args.config)
            if cfg.scenario != scenario:
                print(f"decaylab: config is for {cfg.scenario}, not {scenario}", file=sys.stderr)
                return 2
        else:
            cfg = expyard.ExperimentConfig(scenario)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.s is not None:
            cfg.profile = {**cfg.profile, "s": args.s}
        cfg.validate()
    except expyard.ConfigError as exc:
        print(f"decaylab: {exc}", file=sys.stderr)
        return 2
    try:
        man = expyard.run_experiment(cfg, args.out)
    except expyard.ScenarioError as exc:
        print(f"decaylab: {exc}", file=sys.stderr)
        return 1
    for name, ok in man.checks.items():
        print(f"{name}: {'PASS' if ok else 'FAIL'}")
    for key, val in man.summary.items():
        print(f"{key} = {val}")
    return 0 if man.passed else 1


if __name__ == "__main__":
    sys.exit(main())
