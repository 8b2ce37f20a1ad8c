#!/usr/bin/env python3
"""Laziness benchmark: alternating training vs concat and late fusion.

Trains all three models on the dominant/subordinate synthetic benchmark for
each seed and prints per-modality probe accuracies and fused accuracy.
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from altfuse import evaluation
from altfuse.benchmark import (
    BENCHMARK_SEEDS,
    benchmark_config,
    benchmark_dataset,
    benchmark_splits,
)

KINDS = ("mla", "concat", "late")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, nargs="+", default=list(BENCHMARK_SEEDS))
    parser.add_argument("--out", type=Path, help="optional JSON results file")
    args = parser.parse_args()

    base = benchmark_dataset()
    results = {kind: [] for kind in KINDS}
    for seed in args.seeds:
        t0 = time.time()
        train_ds, _, test_ds = benchmark_splits(base, seed)
        for kind in KINDS:
            model = evaluation.train_kind(kind, benchmark_config(seed), train_ds)
            report = evaluation.evaluate(model, test_ds)
            results[kind].append(
                {"seed": seed, "probes": report.probe_accuracies, "multi": report.multi_accuracy}
            )
        print(f"seed {seed} done in {time.time() - t0:.1f}s")

    print(f"\n{'model':8} {'dominant':>9} {'subordinate':>12} {'multi':>7}   (mean over seeds)")
    for kind in KINDS:
        probes = np.mean([r["probes"] for r in results[kind]], axis=0)
        multi = np.mean([r["multi"] for r in results[kind]])
        print(f"{kind:8} {probes[0]:9.4f} {probes[1]:12.4f} {multi:7.4f}")

    if args.out:
        args.out.write_text(json.dumps(results, indent=2, sort_keys=True))
        print(f"\nwrote {args.out}")


if __name__ == "__main__":
    main()
