#!/usr/bin/env python3
"""Generate a trivially separable ham/spam corpus for smoke experiments."""
import argparse
from pathlib import Path

from spamvision.dataset import write_demo_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="corpus root to create")
    parser.add_argument("--n-ham", type=int, default=100)
    parser.add_argument("--n-spam", type=int, default=100)
    parser.add_argument("--size", type=int, default=64, help="native image size in pixels")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    corpus = write_demo_corpus(
        Path(args.out), n_ham=args.n_ham, n_spam=args.n_spam, size=args.size, seed=args.seed
    )
    ham, spam = corpus.label_counts()
    print(f"wrote {ham} ham + {spam} spam images under {args.out}")


if __name__ == "__main__":
    main()
