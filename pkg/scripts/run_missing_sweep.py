#!/usr/bin/env python3
"""Missing-rate sweep on the benchmark: fused accuracy vs masking rate,
for the alternating model and the late-fusion baseline."""

import argparse
import json
from pathlib import Path

from altfuse import evaluation
from altfuse.benchmark import (
    BENCHMARK_SEEDS,
    BENCHMARK_SPLIT,
    benchmark_config,
    benchmark_dataset,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, nargs="+", default=list(BENCHMARK_SEEDS))
    parser.add_argument(
        "--etas", type=float, nargs="+", default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]
    )
    parser.add_argument("--out", type=Path, help="optional JSON results file")
    args = parser.parse_args()

    base = benchmark_dataset()
    reports = {
        kind: evaluation.missing_sweep(
            benchmark_config(0), base, args.etas, args.seeds, BENCHMARK_SPLIT, kind=kind
        )
        for kind in ("mla", "late")
    }

    print(f"{'eta':>5} {'mla':>8} {'late':>8}   (mean over seeds)")
    rows = []
    for (eta, rm), (_, rl) in zip(reports["mla"].rows, reports["late"].rows):
        rows.append({"eta": eta, "mla": rm.multi_accuracy, "late": rl.multi_accuracy})
        print(f"{eta:5.1f} {rm.multi_accuracy:8.4f} {rl.multi_accuracy:8.4f}")

    if args.out:
        args.out.write_text(json.dumps(rows, indent=2, sort_keys=True))
        print(f"\nwrote {args.out}")


if __name__ == "__main__":
    main()
