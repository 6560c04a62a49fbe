"""Finite-difference check of every loss, in embedding and parameter space.

    python3 scripts/gradcheck_all.py --instances 200 --seed 3
"""

import argparse
import sys

from metricnet import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    results = harness.gradcheck(harness.LOSSES, seed=args.seed, instances=args.instances)
    for r in results:
        print(
            f"{'PASS' if r['passed'] else 'FAIL'} {r['loss']:<14} "
            f"embedding {r['embedding_max_rel_err']:.2e}  parameter {r['parameter_max_rel_err']:.2e}"
        )
    return 0 if all(r["passed"] for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
