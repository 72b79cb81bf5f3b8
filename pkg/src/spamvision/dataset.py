"""Corpus ingestion, seeded splits, overlay synthesis, and featurization.

A corpus directory holds ``ham/`` and/or ``spam/`` subdirectories of JPEG or
PNG files. Splits shuffle with a seeded generator so every run of the same
seed reproduces the same partition. The two overlay modes rebuild
challenge-style spam: ``weighted`` alpha-blends a spam image onto a ham
image, ``masked`` deletes the spam background (pixels near the modal color)
and pastes the remaining foreground onto the ham image.
"""
from __future__ import annotations

import logging
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import EmptyCorpus, InvalidArgument, IoError
from .imaging import (
    CannyParams,
    ImageBuffer,
    flat_feature,
    load_image,
    make_feature,
    resize,
)
from .serialize import canonical_json

log = logging.getLogger(__name__)

HAM, SPAM = 0, 1
_IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png"}


@dataclass
class Corpus:
    name: str
    entries: list  # [(Path, label), ...] label 0 = ham, 1 = spam
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def label_counts(self) -> tuple:
        labels = [label for _, label in self.entries]
        return labels.count(HAM), labels.count(SPAM)


@dataclass(frozen=True)
class SplitPlan:
    train_indices: tuple
    test_indices: tuple
    seed: int


@dataclass(frozen=True)
class OverlayConfig:
    mode: str = "weighted"         # "weighted" | "masked"
    alpha: float = 0.4             # weighted blend weight for the spam image
    background_tolerance: int = 24  # masked mode: max per-channel distance
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("weighted", "masked"):
            raise InvalidArgument(f"overlay mode must be weighted|masked, got {self.mode!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgument(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0 <= self.background_tolerance <= 255:
            raise InvalidArgument(
                f"background_tolerance must be in [0, 255], got {self.background_tolerance}"
            )


@dataclass
class LabeledSet:
    """Feature matrix/tensor stack plus labels and provenance."""

    x: np.ndarray          # (n, d) flat or (n, h, w, c) tensors
    y: np.ndarray          # (n,) labels in {0, 1}
    sources: tuple = ()    # originating file per row, "" when synthetic
    name: str = ""
    tag: str = ""          # split assignment, e.g. "train" / "test"

    def __len__(self) -> int:
        return int(self.y.shape[0])

    def subset(self, indices, tag: str) -> "LabeledSet":
        idx = np.asarray(indices, dtype=np.intp)
        sources = tuple(self.sources[i] for i in idx) if self.sources else ()
        return LabeledSet(self.x[idx], self.y[idx], sources, self.name, tag)


def scan_corpus(root) -> Corpus:
    """Collect (path, label) pairs from root/ham and root/spam, sorted
    lexicographically; non-image files are counted and skipped."""
    root = Path(root)
    if not root.is_dir():
        raise IoError(f"corpus root {root} does not exist")
    entries = []
    skipped = 0
    for sub, label in (("ham", HAM), ("spam", SPAM)):
        folder = root / sub
        if not folder.is_dir():
            continue
        for path in sorted(folder.iterdir()):
            if not path.is_file():
                continue
            if path.suffix.lower() in _IMAGE_SUFFIXES:
                entries.append((path, label))
            else:
                skipped += 1
    if skipped:
        log.warning("skipped %d non-image files under %s", skipped, root)
    if not entries:
        raise EmptyCorpus(f"no images found under {root}")
    return Corpus(name=root.name, entries=entries, skipped=skipped)


def split(corpus: Corpus, train_fraction: float = 0.70, seed: int = 0) -> SplitPlan:
    """Seeded shuffle; the first floor(train_fraction * n) indices train."""
    n = len(corpus)
    if n == 0:
        raise InvalidArgument("cannot split an empty corpus")
    if not 0.0 <= train_fraction <= 1.0:
        raise InvalidArgument(f"train_fraction must be in [0, 1], got {train_fraction}")
    order = np.random.default_rng(seed).permutation(n)
    cut = int(n * train_fraction)
    return SplitPlan(
        train_indices=tuple(int(i) for i in order[:cut]),
        test_indices=tuple(int(i) for i in order[cut:]),
        seed=seed,
    )


def overlay_weighted(spam: ImageBuffer, ham: ImageBuffer, alpha: float) -> ImageBuffer:
    """Per-pixel blend round(alpha * spam + (1 - alpha) * ham); the spam
    image is resized to the ham dimensions first."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidArgument(f"alpha must be in [0, 1], got {alpha}")
    spam = resize(spam, ham.width, ham.height)
    blended = alpha * spam.pixels.astype(np.float64) + (1.0 - alpha) * ham.pixels.astype(np.float64)
    return ImageBuffer(np.clip(np.rint(blended), 0, 255).astype(np.uint8))


def _modal_color(pixels: np.ndarray) -> np.ndarray:
    """Most frequent RGB triple; ties resolved toward the smallest packed
    value for determinism."""
    flat = pixels.reshape(-1, pixels.shape[2]).astype(np.uint32)
    packed = (flat[:, 0] << 16) | (flat[:, 1] << 8) | flat[:, 2]
    colors, counts = np.unique(packed, return_counts=True)
    best = colors[np.argmax(counts)]
    return np.array([(best >> 16) & 255, (best >> 8) & 255, best & 255], dtype=np.uint8)


def overlay_masked(spam: ImageBuffer, ham: ImageBuffer, cfg: OverlayConfig) -> ImageBuffer:
    """Replace spam background pixels (within cfg.background_tolerance of the
    modal spam color, max channel distance) with the ham pixels; keep the
    rest of the spam foreground."""
    spam = resize(spam, ham.width, ham.height)
    background = _modal_color(spam.pixels)
    dist = np.abs(spam.pixels.astype(np.int32) - background.astype(np.int32)).max(axis=2)
    mask = dist <= cfg.background_tolerance
    out = np.where(mask[..., None], ham.pixels, spam.pixels)
    return ImageBuffer(out.astype(np.uint8))


def synthesize_challenge(spam_corpus: Corpus, ham_corpus: Corpus, cfg: OverlayConfig, out_dir) -> Corpus:
    """Overlay every spam image onto a seeded-random ham image and write the
    result (plus a copy of the ham corpus and a JSON-lines manifest) under
    ``out_dir``. Outputs are PNG so reruns are reproducible byte-for-byte."""
    spam_paths = [p for p, label in spam_corpus.entries if label == SPAM]
    ham_paths = [p for p, label in ham_corpus.entries if label == HAM]
    if not spam_paths or not ham_paths:
        raise InvalidArgument("synthesis needs a non-empty spam corpus and a non-empty ham corpus")

    out_dir = Path(out_dir)
    spam_out = out_dir / "spam"
    ham_out = out_dir / "ham"
    try:
        spam_out.mkdir(parents=True, exist_ok=True)
        ham_out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out_dir}: {exc}") from exc

    rng = np.random.default_rng(cfg.seed)
    pairing = rng.integers(0, len(ham_paths), size=len(spam_paths))

    manifest_lines = []
    entries = []
    try:
        for i, spam_path in enumerate(spam_paths):
            ham_path = ham_paths[int(pairing[i])]
            spam_img = load_image(spam_path)
            ham_img = load_image(ham_path)
            if cfg.mode == "weighted":
                out = overlay_weighted(spam_img, ham_img, cfg.alpha)
                extra = {"alpha": cfg.alpha}
            else:
                out = overlay_masked(spam_img, ham_img, cfg)
                extra = {"tolerance": cfg.background_tolerance}
            out_path = spam_out / f"{i:05d}_{spam_path.stem}.png"
            plane = out.pixels[..., 0] if out.channels == 1 else out.pixels
            Image.fromarray(plane).save(out_path, format="PNG")
            entries.append((out_path, SPAM))
            record = {
                "output": str(out_path),
                "spam_source": str(spam_path),
                "ham_source": str(ham_path),
                "mode": cfg.mode,
                "seed": cfg.seed,
            }
            record.update(extra)
            manifest_lines.append(canonical_json(record))

        for ham_path in ham_paths:
            dest = ham_out / ham_path.name
            shutil.copyfile(ham_path, dest)
            entries.append((dest, HAM))
    except OSError as exc:
        raise IoError(f"failed writing synthesized corpus under {out_dir}: {exc}") from exc

    manifest = out_dir / "manifest.jsonl"
    manifest.write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    entries.sort(key=lambda e: (e[1], str(e[0])))
    return Corpus(name=out_dir.name, entries=entries)


def featurize(
    corpus: Corpus,
    kind: str,
    side: int,
    params: CannyParams = CannyParams(),
    flat: bool = True,
    name: str = "",
) -> LabeledSet:
    """Decode every corpus image into a feature row (flat vectors for SVM and
    MLP, stacked tensors for the CNN)."""
    rows = []
    labels = []
    sources = []
    for path, label in corpus.entries:
        img = load_image(path)
        if flat:
            rows.append(flat_feature(img, kind, side, params))
        else:
            rows.append(make_feature(img, kind, side, params).values)
        labels.append(label)
        sources.append(str(path))
    return LabeledSet(
        x=np.stack(rows),
        y=np.asarray(labels, dtype=np.intp),
        sources=tuple(sources),
        name=name or corpus.name,
    )


def write_demo_corpus(root, n_ham: int = 100, n_spam: int = 100, size: int = 64, seed: int = 0) -> Corpus:
    """Generate a trivially separable corpus: solid-color ham images versus
    spam images with dark text-like strokes on a solid background."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    ham_dir = root / "ham"
    spam_dir = root / "spam"
    ham_dir.mkdir(parents=True, exist_ok=True)
    spam_dir.mkdir(parents=True, exist_ok=True)

    def solid(color):
        return np.tile(np.asarray(color, dtype=np.uint8), (size, size, 1))

    for i in range(n_ham):
        color = rng.integers(120, 231, size=3)
        Image.fromarray(solid(color)).save(ham_dir / f"ham_{i:04d}.png", format="PNG")

    for i in range(n_spam):
        color = rng.integers(120, 231, size=3)
        canvas = solid(color)
        ink = int(rng.integers(0, 61))
        n_lines = int(rng.integers(3, 6))
        for line in range(n_lines):
            y = 4 + line * (size - 8) // n_lines + int(rng.integers(0, 3))
            height = int(rng.integers(3, 6))
            x = 4
            while x < size - 6:
                seg = int(rng.integers(4, 10))
                canvas[y : y + height, x : min(x + seg, size - 4)] = ink
                x += seg + int(rng.integers(2, 5))
        Image.fromarray(canvas).save(spam_dir / f"spam_{i:04d}.png", format="PNG")

    return scan_corpus(root)
