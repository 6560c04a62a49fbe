"""Multi-seed loss comparison on the synthetic benchmark.

    python3 scripts/run_benchmark.py --seeds 0 1 2 3 4 --out bench.json

Prints a per-loss table of mean Silhouette / accuracy and the
constellation-vs-triplet win count.
"""

import argparse
import logging

import numpy as np

from metricnet import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--losses", nargs="+", default=list(harness.LOSSES), choices=harness.LOSSES)
    ap.add_argument("--epochs", type=int, default=harness.BENCHMARK_DEFAULTS["epochs"])
    ap.add_argument("--out", default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    base = harness.ExperimentConfig.from_dict(
        {**harness.ExperimentConfig().to_dict(), **harness.BENCHMARK_DEFAULTS, "epochs": args.epochs}
    )
    result = harness.benchmark(base, args.seeds, args.losses)
    result["ordering"] = harness.ordering_summary(result) if {"constellation", "triplet"} <= set(args.losses) else None

    print(f"{'loss':<14}{'silhouette':>12}{'accuracy':>10}{'DB':>8}{'untrained sil':>15}")
    for loss in args.losses:
        runs = [r for r in result["runs"] if r["loss"] == loss and r["finite"]]
        if not runs:
            print(f"{loss:<14}{'non-finite':>12}")
            continue
        mean = lambda key, m: np.mean([r[key][m] for r in runs])
        print(
            f"{loss:<14}{mean('mean', 'silhouette'):>12.3f}{mean('mean', 'accuracy'):>10.3f}"
            f"{mean('mean', 'davies_bouldin'):>8.3f}{mean('untrained_mean', 'silhouette'):>15.3f}"
        )
    if result["ordering"]:
        o = result["ordering"]
        print(f"constellation >= triplet silhouette in {o['wins']}/{o['of']} seeds")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(harness.dumps(result))


if __name__ == "__main__":
    main()
