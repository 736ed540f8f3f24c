"""Chaining on/off comparison over several seeds, with the no-proxy baseline.

    python scripts/chaining_ab.py --seeds 0..9 --out results/chaining_ab
"""
import argparse

from vodsim.experiment import parse_scenario, parse_seeds, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0..9")
    ap.add_argument("--out", default="results/chaining_ab")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    sc = parse_scenario([], {"seeds": parse_seeds(args.seeds), "ab_chaining": True,
                             "baseline": True, "name": "chaining_ab"})
    _, summary = run_experiment(sc, args.out, jobs=args.jobs)
    print(summary)


if __name__ == "__main__":
    main()
