#!/usr/bin/env python3
"""Run the full classifier/feature/size experiment grid over one corpus.

Trains SVM (linear and RBF) on raw and Canny features at 16 and 32 pixels,
an MLP on raw 16, and a CNN on combined 32, then prints the comparison
table. Reports, models, ROC curves, and epoch histories land under
``--out/<cell-name>/``.
"""
import argparse
import sys
import time
from pathlib import Path

from spamvision import cli


def grid(dataset_root, out_root, seed):
    cells = []
    for kernel in ("rbf", "linear"):
        for feature in ("raw", "canny"):
            for side in (32, 16):
                cells.append(
                    (
                        f"svm_{kernel}_{feature}_{side}",
                        {"classifier": "svm", "kernel": kernel, "feature": feature, "side": side},
                    )
                )
    cells.append(("mlp_raw_16", {"classifier": "mlp", "feature": "raw", "side": 16}))
    cells.append(("cnn_combined_32", {"classifier": "cnn", "feature": "combined", "side": 32}))

    reports = []
    for name, extra in cells:
        flags = {"dataset_root": str(dataset_root), "out": str(out_root / name), "seed": str(seed)}
        flags.update({k: str(v) for k, v in extra.items()})
        cfg = cli.resolve_config(flags, {})
        start = time.time()
        artifact = cli.cmd_train(cfg)
        print(f"{name}: done in {time.time() - start:.1f}s -> {artifact.report_path}")
        reports.append(artifact.report_path)
    return reports


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dataset-root", required=True, help="corpus with ham/ and spam/")
    parser.add_argument("--out", required=True, help="directory for the run artifacts")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out_root = Path(args.out)
    reports = grid(args.dataset_root, out_root, args.seed)
    text, _ = cli.cmd_compare([str(p) for p in reports], csv_out=out_root / "comparison.csv")
    print()
    print(text)
    print(f"\ncomparison table: {out_root / 'comparison.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
