"""Command-line interface: synth / train / eval / generate / ablate / export-embeddings.

Training options come from an optional flat key=value config file with
command-line flags taking precedence. All artifact writes are atomic.
"""

import argparse
import os
import sys

import numpy as np

from . import __version__
from .data import (
    SyntheticSpec,
    load_dataset,
    make_synthetic,
    save_dataset,
    write_text_atomic,
)
from .errors import ZslError
from .evaluation import (
    EVAL_MODES,
    GenerationConfig,
    evaluate,
    export_latent_means,
    generate_latent_dataset,
)
from .gaussian import DistanceKind
from .training import (
    TrainConfig,
    check_dataset_compatibility,
    load_checkpoint,
    save_checkpoint,
    train,
)

_TRAIN_KEYS = {
    "iterations": int,
    "batch_size": int,
    "learning_rate": float,
    "margin": float,
    "seed": int,
    "distance": str,
    "eval_every": int,
    "latent_dim": int,
    "visual_hidden": int,
    "semantic_hidden": int,
    "visual_dropout": float,
    "semantic_dropout": float,
    "use_batchnorm": lambda s: s.lower() in ("1", "true", "yes"),
}

_GEN_KEYS = {
    "samples_per_unseen_class": int,
    "seen_to_unseen_ratio": lambda s: tuple(int(v) for v in s.split(":")),
    "classifier_lr": float,
    "classifier_epochs": int,
    "classifier_batch": int,
}


def read_config_file(path):
    """Flat key=value lines; blank lines and # comments ignored."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ZslError(f"{path} line {lineno}: expected key=value")
            key, raw = (part.strip() for part in line.split("=", 1))
            values[key] = raw
    return values


def _build_train_config(args):
    raw = read_config_file(args.config) if args.config else {}
    kwargs = {}
    for key, conv in _TRAIN_KEYS.items():
        if key in raw:
            kwargs[key] = conv(raw[key])
    for key in _TRAIN_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            kwargs[key] = flag
    unknown = set(raw) - set(_TRAIN_KEYS) - set(_GEN_KEYS)
    if unknown:
        raise ZslError(f"unknown config keys: {sorted(unknown)}")
    return TrainConfig(**kwargs)


def _build_generation_config(args):
    raw = read_config_file(args.config) if getattr(args, "config", None) else {}
    kwargs = {}
    for key, conv in _GEN_KEYS.items():
        if key in raw:
            kwargs[key] = conv(raw[key])
    if getattr(args, "samples_per_unseen_class", None) is not None:
        kwargs["samples_per_unseen_class"] = args.samples_per_unseen_class
    if getattr(args, "ratio", None) is not None:
        kwargs["seen_to_unseen_ratio"] = tuple(int(v) for v in args.ratio.split(":"))
    return GenerationConfig(**kwargs)


def _add_train_flags(parser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--iterations", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--learning-rate", dest="learning_rate", type=float)
    parser.add_argument("--margin", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument(
        "--distance", choices=[k.value for k in DistanceKind]
    )
    parser.add_argument("--eval-every", dest="eval_every", type=int)
    parser.add_argument("--latent-dim", dest="latent_dim", type=int)
    parser.add_argument("--visual-hidden", dest="visual_hidden", type=int)
    parser.add_argument("--semantic-hidden", dest="semantic_hidden", type=int)
    parser.add_argument("--visual-dropout", dest="visual_dropout", type=float)
    parser.add_argument("--semantic-dropout", dest="semantic_dropout", type=float)


def _add_generation_flags(parser):
    parser.add_argument("--samples-per-unseen-class",
                        dest="samples_per_unseen_class", type=int)
    parser.add_argument("--ratio", help="seen:unseen generation ratio, e.g. 1:2")


def _write_report(report, out_dir, stem):
    os.makedirs(out_dir, exist_ok=True)
    write_text_atomic(os.path.join(out_dir, f"{stem}.txt"), report.to_text())
    write_text_atomic(os.path.join(out_dir, f"{stem}.kv"), report.to_key_values())


def cmd_synth(args):
    spec = SyntheticSpec(
        n_seen=args.n_seen,
        n_unseen=args.n_unseen,
        feature_dim=args.feature_dim,
        attribute_dim=args.attribute_dim,
        examples_per_class=args.examples_per_class,
        attribute_noise=args.attribute_noise,
        feature_noise=args.feature_noise,
        seed=args.seed,
    )
    save_dataset(make_synthetic(spec), args.out)
    print(f"wrote synthetic dataset to {args.out}")
    return 0


def cmd_train(args):
    config = _build_train_config(args)
    dataset = load_dataset(args.data)
    visual, semantic, log = train(dataset, config)
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "checkpoint.bin")
    save_checkpoint(visual, semantic, config, ckpt)
    log.write(os.path.join(args.out, "runlog.txt"))
    print(f"trained {config.iterations} steps; final loss {log.losses[-1]:.6f}")
    print(f"checkpoint: {ckpt}")
    return 0


def _load_for_eval(args):
    dataset = load_dataset(args.data)
    visual, semantic, config = load_checkpoint(args.checkpoint)
    check_dataset_compatibility(visual, semantic, dataset)
    return dataset, visual, semantic, config


def cmd_eval(args):
    dataset, visual, semantic, config = _load_for_eval(args)
    gen = _build_generation_config(args) if args.mode == "gzsl_generated" else None
    rng = np.random.default_rng(config.seed)
    report = evaluate(visual, semantic, dataset, args.mode, gen=gen,
                      kind=config.distance, rng=rng)
    _write_report(report, args.out, f"report_{args.mode}")
    print(report.to_text())
    return 0


def cmd_generate(args):
    dataset, visual, semantic, config = _load_for_eval(args)
    gen = _build_generation_config(args)
    rng = np.random.default_rng(config.seed)
    latents, labels = generate_latent_dataset(
        semantic, dataset.attributes, np.arange(dataset.n_classes),
        dataset.seen_classes, gen, rng,
    )
    lines = [
        ",".join(f"{v:.10g}" for v in row) + f",{int(y)}"
        for row, y in zip(latents, labels)
    ]
    write_text_atomic(args.out, "\n".join(lines) + "\n")
    print(f"wrote {len(labels)} latent samples to {args.out}")
    return 0


def cmd_export_embeddings(args):
    dataset, visual, _, _ = _load_for_eval(args)
    write_text_atomic(
        args.out, export_latent_means(visual, dataset.features, dataset.labels)
    )
    print(f"wrote latent means for {dataset.n_examples} rows to {args.out}")
    return 0


def cmd_ablate(args):
    dataset = load_dataset(args.data)
    base = _build_train_config(args)
    os.makedirs(args.out, exist_ok=True)

    def retrain(**overrides):
        cfg = TrainConfig(**{**base.to_dict(), **overrides})
        return train(dataset, cfg), cfg

    if args.axis == "distances":
        for kind in (DistanceKind.WASSERSTEIN2, DistanceKind.KULLBACK_LEIBLER,
                     DistanceKind.BHATTACHARYYA):
            (visual, semantic, _), cfg = retrain(distance=kind.value)
            report = evaluate(visual, semantic, dataset, "zsl", kind=cfg.distance)
            _write_report(report, args.out, f"report_distance_{kind.value}")
            print(f"{kind.value}: U={report.unseen_acc:.2f}%")
    elif args.axis == "embeddings":
        for label, kind in (("distribution", DistanceKind.WASSERSTEIN2),
                            ("vector", DistanceKind.EUCLIDEAN_MEANS)):
            (visual, semantic, _), cfg = retrain(distance=kind.value)
            report = evaluate(visual, semantic, dataset, "gzsl_nn", kind=cfg.distance)
            _write_report(report, args.out, f"report_embeddings_{label}")
            print(f"{label}: H={report.harmonic:.2f}%")
    else:  # ratio
        ratios = [r.strip() for r in args.ratios.split(",")]
        (visual, semantic, _), cfg = retrain()
        for ratio in ratios:
            gen = GenerationConfig(
                samples_per_unseen_class=args.samples_per_unseen_class or 200,
                seen_to_unseen_ratio=tuple(int(v) for v in ratio.split(":")),
            )
            rng = np.random.default_rng(cfg.seed)
            report = evaluate(visual, semantic, dataset, "gzsl_generated",
                              gen=gen, kind=cfg.distance, rng=rng)
            stem = f"report_ratio_{ratio.replace(':', 'to')}"
            _write_report(report, args.out, stem)
            print(f"ratio {ratio}: H={report.harmonic:.2f}%")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="zslkit",
        description="Zero-shot learning with Gaussian distribution embeddings "
                    "and triplet constraints.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic benchmark dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-seen", dest="n_seen", type=int, default=15)
    p.add_argument("--n-unseen", dest="n_unseen", type=int, default=5)
    p.add_argument("--feature-dim", dest="feature_dim", type=int, default=64)
    p.add_argument("--attribute-dim", dest="attribute_dim", type=int, default=16)
    p.add_argument("--examples-per-class", dest="examples_per_class", type=int, default=50)
    p.add_argument("--attribute-noise", dest="attribute_noise", type=float, default=0.0)
    p.add_argument("--feature-noise", dest="feature_noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train both encoders on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=EVAL_MODES, default="zsl")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    _add_generation_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("generate", help="sample latent features from class embeddings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    _add_generation_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ablate", help="sweep an ablation axis")
    p.add_argument("axis", choices=("distances", "embeddings", "ratio"))
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ratios", default="1:1,1:2,1:3,2:1",
                   help="comma-separated seen:unseen ratios (ratio axis)")
    _add_train_flags(p)
    _add_generation_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export-embeddings",
                       help="write latent means for external visualization")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_embeddings)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    try:
        return args.func(args)
    except ZslError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
