"""How catalog size shapes the headline metrics under the default workload.

The catalog size is not fixed by the workload description; this survey is what
the default (5 videos) was chosen from.

    python scripts/catalog_survey.py --sizes 4,5,6,8 --seeds 0..9
"""
import argparse

import numpy as np

from vodsim.experiment import parse_seeds
from vodsim.simcore import RunConfig, run, run_paired


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="4,5,6,8")
    ap.add_argument("--seeds", default="0..9")
    args = ap.parse_args()
    seeds = parse_seeds(args.seeds)
    print(f"{'videos':>6s} {'lpsg on':>8s} {'lpsg off':>8s} {'VHR':>6s} {'wan':>6s} {'reduction':>9s}")
    for n in (int(s) for s in args.sizes.split(",")):
        on, off, red = [], [], []
        for s in seeds:
            main_run, _ = run_paired(RunConfig(seed=s, n_videos=n))
            on.append(main_run.report)
            red.append(main_run.report.server_load_reduction)
            off.append(run(RunConfig(seed=s, n_videos=n, chaining=False)).report)
        print(f"{n:6d} {np.mean([r.lpsg_fraction for r in on]):8.3f} "
              f"{np.mean([r.lpsg_fraction for r in off]):8.3f} {np.mean([r.VHR for r in on]):6.3f} "
              f"{np.mean([r.wan_fraction for r in on]):6.3f} {np.mean(red):9.3f}")


if __name__ == "__main__":
    main()
