"""Finite-difference sweep over every model kind, curvature mode and dimension.

    python scripts/gradcheck_sweep.py --instances 100 --seed 0
"""

import argparse
import time

import numpy as np

from hypkg.diff import finite_difference_check, random_instance
from hypkg.model import KINDS


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--instances", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--step", type=float, default=1e-6)
    args = ap.parse_args()

    print("kind\tcurvature\tdim\tworst\tnear_clamp\tseconds")
    overall = 0.0
    for kind in sorted(KINDS):
        for fixed in (False, True):
            for dim in (2, 4, 8):
                rng = np.random.default_rng([args.seed, dim, int(fixed), sorted(KINDS).index(kind)])
                start = time.perf_counter()
                errs = np.array(
                    [
                        finite_difference_check(*random_instance(kind, dim, rng, fixed), step=args.step)
                        for _ in range(args.instances)
                    ]
                )
                skipped = int(np.isnan(errs).sum())
                worst = float(np.nanmax(errs)) if skipped < len(errs) else float("nan")
                overall = max(overall, worst)
                mode = "fixed" if fixed else "trainable"
                print(f"{kind}\t{mode}\t{dim}\t{worst:.2e}\t{skipped}\t{time.perf_counter() - start:.2f}")
    print(f"overall worst relative error {overall:.2e}")


if __name__ == "__main__":
    main()
