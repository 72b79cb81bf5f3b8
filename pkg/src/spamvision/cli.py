"""Command-line orchestration: train, eval, synth, gradcheck, compare.

Configuration resolves in flag > config-file > default order; config files
are flat ``key = value`` text using the same names as the flags. Every run
writes its artifacts atomically and embeds the fully resolved configuration
plus its hash in the report, so a report can be re-run verbatim and two runs
of the same configuration produce byte-identical reports.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 verification
failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import metrics, nn, svm
from .errors import (
    ConfigError,
    DecodeError,
    EmptyCorpus,
    InvalidArgument,
    IoError,
    ShapeError,
    StateError,
    VersionError,
)
from .imaging import FEATURE_CHANNELS, FEATURE_KINDS, CannyParams, write_feature_csv
from .serialize import (
    FORMAT_VERSION,
    atomic_write_text,
    canonical_json,
    config_hash,
    format_float,
)

log = logging.getLogger(__name__)

CLASSIFIERS = ("svm", "mlp", "cnn")
TRAIN_FRACTION = 0.70


@dataclass
class SvmParams:
    kernel: str = "rbf"
    gamma: float | None = None  # None -> 1 / (n_features * variance)
    c: float = 1.0
    tol: float = 1e-3
    max_passes: int = 10


@dataclass
class ExperimentConfig:
    dataset_root: str
    output_dir: str
    classifier: str = "svm"
    feature_kind: str = "raw"
    side: int = 32
    seed: int = 0
    svm: SvmParams = field(default_factory=SvmParams)
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    canny: CannyParams = field(default_factory=CannyParams)


@dataclass
class RunArtifact:
    model_path: Path
    report_path: Path
    roc_path: Path
    history_path: Path | None = None


# flat config keys: (parser, reader from ExperimentConfig)
_CONFIG_FIELDS = {
    "dataset_root": str,
    "out": str,
    "classifier": str,
    "feature": str,
    "side": int,
    "seed": int,
    "kernel": str,
    "gamma": "gamma",
    "c": float,
    "tol": float,
    "max_passes": int,
    "epochs": int,
    "batch_size": int,
    "val_fraction": float,
    "lr": float,
    "canny_sigma": float,
    "canny_kernel": int,
    "canny_low": float,
    "canny_high": float,
}


def _parse_gamma(raw):
    if raw is None or raw == "" or str(raw).lower() == "scale":
        return None
    return float(raw)


def parse_config_file(path) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def resolve_config(flags: dict, file_values: dict) -> ExperimentConfig:
    """Merge flag values over file values over defaults."""
    merged = {}
    for key, kind in _CONFIG_FIELDS.items():
        raw = flags.get(key)
        if raw is None:
            raw = file_values.get(key)
        if raw is None:
            continue
        try:
            if kind == "gamma":
                merged[key] = _parse_gamma(raw)
            else:
                merged[key] = kind(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from exc

    for required in ("dataset_root", "out"):
        if required not in merged:
            raise ConfigError(f"missing required setting {required!r}")
    classifier = merged.get("classifier", "svm")
    if classifier not in CLASSIFIERS:
        raise ConfigError(f"classifier must be one of {CLASSIFIERS}, got {classifier!r}")
    feature = merged.get("feature", "raw")
    if feature not in FEATURE_KINDS:
        raise ConfigError(f"feature must be one of {FEATURE_KINDS}, got {feature!r}")
    kernel = merged.get("kernel", "rbf")
    if kernel not in ("linear", "rbf"):
        raise ConfigError(f"kernel must be linear or rbf, got {kernel!r}")

    try:
        cfg = ExperimentConfig(
            dataset_root=merged["dataset_root"],
            output_dir=merged["out"],
            classifier=classifier,
            feature_kind=feature,
            side=merged.get("side", 32),
            seed=merged.get("seed", 0),
            svm=SvmParams(
                kernel=kernel,
                gamma=merged.get("gamma"),
                c=merged.get("c", 1.0),
                tol=merged.get("tol", 1e-3),
                max_passes=merged.get("max_passes", 10),
            ),
            train=nn.TrainConfig(
                epochs=merged.get("epochs", 100),
                batch_size=merged.get("batch_size", 64),
                validation_fraction=merged.get("val_fraction", 0.15),
                learning_rate=merged.get("lr", 1e-3),
                rng_seed=merged.get("seed", 0),
            ),
            canny=CannyParams(
                gaussian_sigma=merged.get("canny_sigma", 1.4),
                gaussian_kernel_size=merged.get("canny_kernel", 5),
                low_threshold=merged.get("canny_low", 100.0),
                high_threshold=merged.get("canny_high", 200.0),
            ),
        )
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.side < 3:
        raise ConfigError(f"side must be >= 3, got {cfg.side}")
    return cfg


def config_to_dict(cfg: ExperimentConfig, resolved_gamma=None) -> dict:
    gamma = resolved_gamma if resolved_gamma is not None else cfg.svm.gamma
    return {
        "dataset_root": str(cfg.dataset_root),
        "out": str(cfg.output_dir),
        "classifier": cfg.classifier,
        "feature": cfg.feature_kind,
        "side": cfg.side,
        "seed": cfg.seed,
        "kernel": cfg.svm.kernel,
        "gamma": gamma,
        "c": cfg.svm.c,
        "tol": cfg.svm.tol,
        "max_passes": cfg.svm.max_passes,
        "epochs": cfg.train.epochs,
        "batch_size": cfg.train.batch_size,
        "val_fraction": cfg.train.validation_fraction,
        "lr": cfg.train.learning_rate,
        "canny_sigma": cfg.canny.gaussian_sigma,
        "canny_kernel": cfg.canny.gaussian_kernel_size,
        "canny_low": cfg.canny.low_threshold,
        "canny_high": cfg.canny.high_threshold,
    }


def config_from_dict(d: dict) -> ExperimentConfig:
    """Rebuild a config from the dict a report embeds."""
    return resolve_config({k: v for k, v in d.items() if v is not None}, {})


def _write_roc_csv(path, curve) -> Path:
    lines = ["fpr,tpr"]
    lines += [f"{format_float(fpr)},{format_float(tpr)}" for fpr, tpr in curve.points]
    return atomic_write_text(path, "\n".join(lines) + "\n")


def _write_history_csv(path, history) -> Path:
    lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
    for rec in history:
        lines.append(
            ",".join(
                [str(rec.epoch)]
                + [format_float(v) for v in (rec.train_loss, rec.train_acc, rec.val_loss, rec.val_acc)]
            )
        )
    return atomic_write_text(path, "\n".join(lines) + "\n")


def _feature_meta(cfg: ExperimentConfig) -> dict:
    meta = {"kind": cfg.feature_kind, "side": cfg.side}
    meta.update(cfg.canny.to_dict())
    return meta


def cmd_train(cfg: ExperimentConfig, dump_features=None) -> RunArtifact:
    """Scan, featurize, split 70/30, train the selected classifier, evaluate
    on the held-out split, and write model/report/ROC (and history for the
    neural nets)."""
    corpus = ds.scan_corpus(cfg.dataset_root)
    n_ham, n_spam = corpus.label_counts()
    if n_ham == 0 or n_spam == 0:
        raise InvalidArgument(
            f"training needs both classes, corpus {corpus.name} has "
            f"{n_ham} ham / {n_spam} spam"
        )
    log.info("corpus %s: %d ham, %d spam", corpus.name, n_ham, n_spam)

    flat = cfg.classifier in ("svm", "mlp")
    features = ds.featurize(corpus, cfg.feature_kind, cfg.side, cfg.canny, flat=flat)
    if dump_features is not None:
        write_feature_csv(dump_features, features.x, features.y)

    plan = ds.split(corpus, TRAIN_FRACTION, cfg.seed)
    train_set = features.subset(plan.train_indices, "train")
    test_set = features.subset(plan.test_indices, "test")

    history = None
    resolved_gamma = cfg.svm.gamma
    if cfg.classifier == "svm":
        gamma = cfg.svm.gamma
        if cfg.svm.kernel == "rbf" and gamma is None:
            gamma = svm.scale_gamma(train_set.x)
        resolved_gamma = gamma
        spec = svm.KernelSpec(cfg.svm.kernel, gamma)
        model = svm.smo_train(
            train_set, spec, c=cfg.svm.c, tol=cfg.svm.tol,
            max_passes=cfg.svm.max_passes, seed=cfg.seed,
        )
        scores = svm.decision_batch(model, test_set.x)
        threshold = 0.0
        model_dict = svm.svm_to_dict(model)
        input_shape = [int(model.support_vectors.shape[1])]
    else:
        if cfg.classifier == "mlp":
            net = nn.build_mlp(int(train_set.x.shape[1]), seed=cfg.seed)
        else:
            net = nn.build_cnn(cfg.side, FEATURE_CHANNELS[cfg.feature_kind], seed=cfg.seed)
        net, history = nn.train(net, train_set, cfg.train)
        scores = nn.predict(net, test_set.x)
        threshold = 0.5
        model_dict = nn.net_to_dict(net)
        input_shape = list(net.input_shape)

    results = metrics.report_metrics(list(zip(scores, test_set.y)), threshold)

    resolved = config_to_dict(cfg, resolved_gamma)
    digest = config_hash(resolved)
    out_dir = Path(cfg.output_dir)

    envelope = {
        "format_version": FORMAT_VERSION,
        "kind": cfg.classifier,
        "feature": _feature_meta(cfg),
        "threshold": threshold,
        "input_shape": input_shape,
        "config_hash": digest,
        "model": model_dict,
    }
    model_path = atomic_write_text(out_dir / "model.json", canonical_json(envelope) + "\n")
    roc_path = _write_roc_csv(out_dir / "roc.csv", results["curve"])
    history_path = None
    if history is not None:
        history_path = _write_history_csv(out_dir / "history.csv", history)

    report = {
        "format_version": FORMAT_VERSION,
        "dataset": corpus.name,
        "classifier": cfg.classifier,
        "feature_kind": cfg.feature_kind,
        "accuracy": results["accuracy"],
        "auc": results["auc"],
        "confusion": results["confusion"],
        "threshold": threshold,
        "train_size": len(train_set),
        "test_size": len(test_set),
        "config": resolved,
        "config_hash": digest,
        "files": {
            "model": model_path.name,
            "roc": roc_path.name,
            "history": history_path.name if history_path else None,
        },
    }
    report_path = atomic_write_text(out_dir / "report.json", canonical_json(report) + "\n")
    log.info(
        "%s/%s on %s: accuracy %.4f auc %.4f",
        cfg.classifier, cfg.feature_kind, corpus.name,
        results["accuracy"], results["auc"],
    )
    return RunArtifact(model_path, report_path, roc_path, history_path)


def load_model_envelope(path) -> dict:
    try:
        envelope = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise VersionError(f"model file {path} is not valid JSON: {exc}") from exc
    version = envelope.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"model {path} has format_version {version!r}, expected {FORMAT_VERSION!r}")
    return envelope


def cmd_eval(model_path, dataset_root, out_dir, overrides: dict | None = None) -> dict:
    """Score a dataset with a saved model; writes report.json and roc.csv
    under out_dir without touching the model."""
    envelope = load_model_envelope(model_path)
    kind = envelope["kind"]
    meta = dict(envelope["feature"])
    if overrides:
        meta.update({k: v for k, v in overrides.items() if v is not None})
    params = CannyParams(
        gaussian_sigma=meta["canny_sigma"],
        gaussian_kernel_size=meta["canny_kernel"],
        low_threshold=meta["canny_low"],
        high_threshold=meta["canny_high"],
    )

    corpus = ds.scan_corpus(dataset_root)
    flat = kind in ("svm", "mlp")
    features = ds.featurize(corpus, meta["kind"], meta["side"], params, flat=flat)

    expected = tuple(envelope["input_shape"])
    actual = tuple(features.x.shape[1:])
    if actual != expected:
        raise ShapeError(
            f"model expects input shape {expected}, features have shape {actual}; "
            f"check the feature flags"
        )

    if kind == "svm":
        model = svm.svm_from_dict(envelope["model"])
        scores = svm.decision_batch(model, features.x)
    else:
        net = nn.net_from_dict(envelope["model"])
        scores = nn.predict(net, features.x)
    threshold = float(envelope["threshold"])
    results = metrics.report_metrics(list(zip(scores, features.y)), threshold)

    eval_config = {
        "mode": "eval",
        "model": str(model_path),
        "model_config_hash": envelope.get("config_hash"),
        "dataset_root": str(dataset_root),
        "feature": meta,
    }
    digest = config_hash(eval_config)
    report = {
        "format_version": FORMAT_VERSION,
        "dataset": corpus.name,
        "classifier": kind,
        "feature_kind": meta["kind"],
        "accuracy": results["accuracy"],
        "auc": results["auc"],
        "confusion": results["confusion"],
        "threshold": threshold,
        "test_size": len(features),
        "config": eval_config,
        "config_hash": digest,
    }
    out_dir = Path(out_dir)
    atomic_write_text(out_dir / "report.json", canonical_json(report) + "\n")
    _write_roc_csv(out_dir / "roc.csv", results["curve"])
    return report


def cmd_synth(spam_root, ham_root, cfg: ds.OverlayConfig, out_dir) -> Path:
    """Build a challenge-style corpus from existing spam and ham corpora."""
    spam_corpus = ds.scan_corpus(spam_root)
    ham_corpus = ds.scan_corpus(ham_root)
    ds.synthesize_challenge(spam_corpus, ham_corpus, cfg, out_dir)
    return Path(out_dir) / "manifest.jsonl"


GRADCHECK_LIMIT = 1e-4


def cmd_gradcheck(arch: str, seed: int = 0, perturb_gradients: bool = False) -> dict:
    """Finite-difference verification of backpropagation on a tiny instance
    of the chosen architecture. Returns the error report plus a pass flag."""
    rng = np.random.default_rng(seed)
    if arch == "mlp":
        model = nn.build_mlp(8, seed=seed)
        x = rng.normal(size=(4, 8))
    elif arch == "cnn":
        model = nn.build_cnn(8, 4, seed=seed)
        x = rng.normal(size=(2, 8, 8, 4))
    else:
        raise ConfigError(f"arch must be mlp or cnn, got {arch!r}")
    y = rng.integers(0, 2, size=(x.shape[0], 1)).astype(np.float64)
    result = nn.gradient_check(
        model, x, y, rng_seed=seed, perturb_gradients=perturb_gradients
    )
    result["arch"] = arch
    result["passed"] = result["max_relative_error"] < GRADCHECK_LIMIT
    return result


def cmd_compare(report_paths, csv_out=None):
    """Tabulate reports (dataset x classifier x feature -> accuracy, AUC),
    deduplicated by config hash and sorted by accuracy descending."""
    if not report_paths:
        raise ConfigError("compare needs at least one report")
    rows = []
    seen = set()
    for path in report_paths:
        try:
            report = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoError(f"cannot read report {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise VersionError(f"report {path} is not valid JSON: {exc}") from exc
        version = report.get("format_version")
        if version != FORMAT_VERSION:
            raise VersionError(
                f"report {path} has format_version {version!r}, expected {FORMAT_VERSION!r}"
            )
        digest = report.get("config_hash")
        if digest in seen:
            continue
        seen.add(digest)
        rows.append(
            {
                "dataset": report["dataset"],
                "classifier": report["classifier"],
                "feature": report["feature_kind"],
                "accuracy": float(report["accuracy"]),
                "auc": float(report["auc"]),
            }
        )
    rows.sort(key=lambda r: -r["accuracy"])

    header = f"{'dataset':<20} {'classifier':<10} {'feature':<9} {'accuracy':>9} {'auc':>9}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r['dataset']:<20} {r['classifier']:<10} {r['feature']:<9} "
            f"{r['accuracy']:>9.4f} {r['auc']:>9.4f}"
        )
    text = "\n".join(lines)
    if csv_out is not None:
        csv_lines = ["dataset,classifier,feature,accuracy,auc"]
        for r in rows:
            csv_lines.append(
                f"{r['dataset']},{r['classifier']},{r['feature']},"
                f"{format_float(r['accuracy'])},{format_float(r['auc'])}"
            )
        atomic_write_text(csv_out, "\n".join(csv_lines) + "\n")
    return text, rows


def _add_train_flags(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--dataset-root", dest="dataset_root")
    p.add_argument("--out")
    p.add_argument("--classifier", choices=CLASSIFIERS)
    p.add_argument("--feature", choices=FEATURE_KINDS)
    p.add_argument("--side", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--kernel", choices=("linear", "rbf"))
    p.add_argument("--gamma", help="rbf width, a float or 'scale'")
    p.add_argument("--c", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-passes", dest="max_passes", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--canny-sigma", dest="canny_sigma", type=float)
    p.add_argument("--canny-kernel", dest="canny_kernel", type=int)
    p.add_argument("--canny-low", dest="canny_low", type=float)
    p.add_argument("--canny-high", dest="canny_high", type=float)
    p.add_argument("--dump-features", dest="dump_features", help="also write feature CSV here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spamvision", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a classifier and evaluate the held-out split")
    _add_train_flags(p_train)

    p_eval = sub.add_parser("eval", help="score a dataset with a saved model")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--dataset-root", dest="dataset_root", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--feature", choices=FEATURE_KINDS)
    p_eval.add_argument("--side", type=int)

    p_synth = sub.add_parser("synth", help="synthesize a challenge-style corpus")
    p_synth.add_argument("--spam-root", dest="spam_root", required=True)
    p_synth.add_argument("--ham-root", dest="ham_root", required=True)
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--mode", choices=("weighted", "masked"), default="weighted")
    p_synth.add_argument("--alpha", type=float, default=0.4)
    p_synth.add_argument("--tolerance", type=int, default=24)
    p_synth.add_argument("--seed", type=int, default=0)

    p_grad = sub.add_parser("gradcheck", help="verify backprop against finite differences")
    p_grad.add_argument("--arch", choices=("mlp", "cnn"), required=True)
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument(
        "--perturb-gradients", action="store_true",
        help="negative control: corrupt the analytic gradients",
    )

    p_cmp = sub.add_parser("compare", help="tabulate reports by accuracy")
    p_cmp.add_argument("reports", nargs="+")
    p_cmp.add_argument("--csv", dest="csv_out")
    return parser


def _run(args) -> int:
    if args.command == "train":
        file_values = parse_config_file(args.config) if args.config else {}
        flag_keys = set(_CONFIG_FIELDS)
        flags = {k: v for k, v in vars(args).items() if k in flag_keys and v is not None}
        cfg = resolve_config(flags, file_values)
        artifact = cmd_train(cfg, dump_features=args.dump_features)
        print(artifact.report_path)
        return 0
    if args.command == "eval":
        overrides = {"kind": args.feature, "side": args.side}
        report = cmd_eval(args.model, args.dataset_root, args.out, overrides)
        print(f"accuracy {report['accuracy']:.4f} auc {report['auc']:.4f}")
        return 0
    if args.command == "synth":
        cfg = ds.OverlayConfig(
            mode=args.mode, alpha=args.alpha,
            background_tolerance=args.tolerance, seed=args.seed,
        )
        manifest = cmd_synth(args.spam_root, args.ham_root, cfg, args.out)
        print(manifest)
        return 0
    if args.command == "gradcheck":
        result = cmd_gradcheck(args.arch, args.seed, args.perturb_gradients)
        for name, err in sorted(result["per_group"].items()):
            print(f"{name}: {err:.3e}")
        status = "PASS" if result["passed"] else "FAIL"
        print(f"{status} {args.arch}: max relative error {result['max_relative_error']:.3e}")
        return 0 if result["passed"] else 4
    if args.command == "compare":
        text, _ = cmd_compare(args.reports, csv_out=args.csv_out)
        print(text)
        return 0
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, VersionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DecodeError, IoError, EmptyCorpus, InvalidArgument, ShapeError, StateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
