"""Effect of prefix size: VHR, rejection ratio and MMS traffic against x_scale.

Prints one line per (x_scale, chaining) with means over the seeds and writes the
per-run rows to <out>/results.csv.

    python scripts/sweep_prefix.py --seeds 0..4
"""
import argparse
from collections import defaultdict

import numpy as np

from vodsim.experiment import parse_scenario, parse_seeds, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--values", default="0.1,0.2,0.3,0.4,0.5")
    ap.add_argument("--seeds", default="7")
    ap.add_argument("--out", default="results/prefix_sweep")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    sc = parse_scenario([f"sweep = x_scale: {args.values}"],
                        {"seeds": parse_seeds(args.seeds), "ab_chaining": True, "name": "prefix_sweep"})
    results, _ = run_experiment(sc, args.out, jobs=args.jobs)
    groups = defaultdict(list)
    for spec, rep in results:
        groups[spec.key].append(rep)
    print(f"{'sweep point':32s} {'VHR':>6s} {'R_rej':>6s} {'wan':>6s} {'joins':>6s}")
    for key, reps in groups.items():
        print(f"{key:32s} {np.mean([r.VHR for r in reps]):6.3f} "
              f"{np.mean([r.R_rej for r in reps]):6.3f} {np.mean([r.wan_fraction for r in reps]):6.3f} "
              f"{np.mean([r.source_breakdown['join_chain'] for r in reps]):6.1f}")


if __name__ == "__main__":
    main()
