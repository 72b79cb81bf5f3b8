#!/usr/bin/env python3
"""Synthesize a challenge-style corpus by overlaying spam onto ham images.

``weighted`` alpha-blends whole spam images onto ham backgrounds;
``masked`` deletes the spam background (pixels near its modal color) first,
leaving readable spam text on a ham image.
"""
import argparse
import sys

from spamvision import cli
from spamvision.dataset import OverlayConfig


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--spam-root", required=True, help="corpus supplying the spam images")
    parser.add_argument("--ham-root", required=True, help="corpus supplying the ham images")
    parser.add_argument("--out", required=True)
    parser.add_argument("--mode", choices=("weighted", "masked"), default="weighted")
    parser.add_argument("--alpha", type=float, default=0.4, help="weighted-mode blend weight")
    parser.add_argument("--tolerance", type=int, default=24, help="masked-mode background distance")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    cfg = OverlayConfig(
        mode=args.mode, alpha=args.alpha, background_tolerance=args.tolerance, seed=args.seed
    )
    manifest = cli.cmd_synth(args.spam_root, args.ham_root, cfg, args.out)
    print(f"manifest: {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
