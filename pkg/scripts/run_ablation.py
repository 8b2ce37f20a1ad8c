#!/usr/bin/env python3
"""Ablation grid on the benchmark: head-gradient modification x dynamic fusion."""

import argparse
import json
from pathlib import Path

import numpy as np

from altfuse import evaluation
from altfuse.benchmark import (
    BENCHMARK_SEEDS,
    benchmark_config,
    benchmark_dataset,
    benchmark_splits,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, nargs="+", default=list(BENCHMARK_SEEDS))
    parser.add_argument("--out", type=Path, help="optional JSON results file")
    args = parser.parse_args()

    base = benchmark_dataset()
    cells: dict[tuple[bool, bool], list[float]] = {}
    for seed in args.seeds:
        train_ds, _, test_ds = benchmark_splits(base, seed)
        grid = evaluation.ablate(benchmark_config(seed), train_ds, test_ds)
        for key, report in grid.items():
            cells.setdefault(key, []).append(report.multi_accuracy)
        print(f"seed {seed} done")

    print(f"\n{'hgm':>5} {'df':>5} {'multi':>8}   (mean over seeds)")
    payload = []
    for (hgm, df), values in sorted(cells.items(), reverse=True):
        mean = float(np.mean(values))
        payload.append({"hgm": hgm, "df": df, "multi": mean, "per_seed": values})
        print(f"{str(hgm):>5} {str(df):>5} {mean:8.4f}")

    if args.out:
        args.out.write_text(json.dumps(payload, indent=2, sort_keys=True))
        print(f"\nwrote {args.out}")


if __name__ == "__main__":
    main()
