"""Command line entry point: ``stochcls run|validate|compare|selftest``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import harness, selftest
from .errors import StochCLSError


def _add_overrides(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--replicates", type=int, help="override the number of replicates")
    p.add_argument("--maxtime", type=float, help="override the simulated days")
    p.add_argument("--sample-interval", type=float, help="override the sampling interval (days)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochcls", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="simulate an ensemble and write CSV output")
    _add_overrides(p)
    p.add_argument("--out", help="output directory (default: config 'output' or ./out)")
    p.add_argument("--workers", type=int, default=1, help="parallel replicate workers")

    p = sub.add_parser("validate", help="check a configuration and its inputs")
    _add_overrides(p)

    p = sub.add_parser("compare", help="join a run's mean adults with trap counts")
    p.add_argument("--summary", required=True, help="summary.csv written by 'run'")
    p.add_argument("--traps", default=None, help="trap CSV (default: bundled series)")
    p.add_argument("--out", required=True, help="comparison CSV to write")

    p = sub.add_parser("selftest", help="run a statistical self-check")
    p.add_argument("suite", choices=sorted(selftest.SUITES) + ["all"])
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config(args) -> harness.RunConfig:
    cfg = harness.load_config(args.config)
    return cfg.with_overrides(seed=args.seed, replicates=args.replicates, maxtime=args.maxtime,
                              sample_interval=args.sample_interval)


def _run(args) -> int:
    cfg = _config(args)
    paths = harness.run_ensemble(cfg, args.out, workers=args.workers)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return 0


def _validate(args) -> int:
    info = harness.validate(_config(args))
    print(json.dumps(info, indent=2))
    return 0


def _compare(args) -> int:
    traps_path = Path(args.traps) if args.traps else harness.data_path("traps.csv")
    rows, r = harness.compare_traps(harness.read_summary(args.summary), harness.read_traps(traps_path))
    harness.write_comparison(args.out, rows)
    print(f"rows: {len(rows)}")
    print("pearson_r: " + ("nan" if math.isnan(r) else f"{r:.4f}"))
    return 0


def _selftest(args) -> int:
    names = sorted(selftest.SUITES) if args.suite == "all" else [args.suite]
    ok = True
    for name in names:
        result = selftest.run_suite(name, seed=args.seed)
        print(result.report())
        ok = ok and result.passed
    return 0 if ok else 1


VERBS = {"run": _run, "validate": _validate, "compare": _compare, "selftest": _selftest}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return VERBS[args.verb](args)
    except (StochCLSError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
