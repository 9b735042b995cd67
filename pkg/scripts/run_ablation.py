#!/usr/bin/env python3
"""Run the four-way ablation grid on the reference benchmark.

Prints per-seed MAP@R for baseline / c4_only / c3e_only / full and the
mean per ablation.  Seeds and sizes are CLI-settable; defaults match the
release-check configuration.
"""

import argparse
import json

from centerpolar.experiments import run_ablation_grid


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5, help="number of seeds (0..n-1)")
    parser.add_argument("--lam", type=float, default=None, help="centripetal weight")
    parser.add_argument("--epochs", type=int, default=None, help="training epochs per run")
    parser.add_argument("--out", default=None, help="optional JSON output path")
    args = parser.parse_args()

    kwargs = {}
    if args.lam is not None:
        kwargs["lam"] = args.lam
    if args.epochs is not None:
        kwargs["total_epochs"] = args.epochs
    results = run_ablation_grid(range(args.seeds), **kwargs)

    for ablation, scores in results.items():
        mean = sum(scores) / len(scores)
        print(f"{ablation:9s} mean={mean:.4f}  " + " ".join(f"{s:.4f}" for s in scores))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
