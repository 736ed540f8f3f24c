"""Command-line entry point: `vodsim --scenario file.cfg --ab-chaining --seeds 0..9`."""
from __future__ import annotations

import argparse
import os
import sys

from vodsim.experiment import ScenarioError, parse_scenario, parse_seeds, run_experiment
from vodsim.simcore import InvariantViolation

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vodsim", description="Prefix-caching and chaining VoD simulator.")
    ap.add_argument("--scenario", help="scenario file (key = value lines); defaults if omitted")
    seeds = ap.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, help="single seed")
    seeds.add_argument("--seeds", help="inclusive seed range n..m")
    ap.add_argument("--chaining", choices=["on", "off"], help="enable or disable client chaining")
    ap.add_argument("--ab-chaining", action="store_true", help="run every point with chaining on and off")
    ap.add_argument("--baseline", choices=["no-proxy"], help="pair every run with a no-proxy baseline")
    ap.add_argument("--trace", action="store_true", help="write one event trace per run")
    ap.add_argument("--out", help="output directory (default: $VODSIM_OUT or ./results)")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes")
    return ap


def overrides_from(args) -> dict:
    """Flag values that take precedence over scenario-file keys."""
    ov: dict = {}
    if args.seed is not None:
        ov["seeds"] = [args.seed]
        ov["seed"] = args.seed
    if args.seeds is not None:
        ov["seeds"] = parse_seeds(args.seeds)
    if args.chaining is not None:
        ov["chaining"] = args.chaining == "on"
    if args.ab_chaining:
        ov["ab_chaining"] = True
    if args.baseline:
        ov["baseline"] = True
    if args.out:
        ov["out_dir"] = args.out
    return ov


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ov = overrides_from(args)
        sc = parse_scenario(args.scenario if args.scenario else [], ov)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"vodsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = sc.out_dir or os.environ.get("VODSIM_OUT") or "results"
    try:
        _, summary = run_experiment(sc, out, trace=args.trace, jobs=max(1, args.jobs))
    except InvariantViolation as exc:
        print(f"vodsim: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    print(summary, end="")
    print(f"results written to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
