"""Command-line front door for datasets, training, benchmarks, and recipes."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import rng as rngmod
from .autodiff import finite_diff_check, mse_loss
from .evaluation import summary_to_csv
from .experiments import (
    METHOD_ORDER,
    PROFILES,
    ExperimentError,
    default_grids,
    make_experiment_config,
    run_bench_dir,
    run_experiment,
    run_method,
)
from .render import render_stimulus_files
from .stimuli import (
    DatasetError,
    ShapeSceneSpec,
    SpecError,
    generate_dataset,
    generate_shape_stimulus,
    load_dataset,
    load_manifest,
    load_stimulus,
    spec_from_dict,
)
from .unet import (
    CheckpointError,
    ConfigError,
    TrainConfig,
    UNetConfig,
    build_unet,
    encode_target,
    load_checkpoint,
    predict_labels,
    save_checkpoint,
    train,
)


def _add_common(sub, out_default=None):
    sub.add_argument("--seed", type=int, default=0, help="master seed")
    sub.add_argument("--out", default=out_default, required=out_default is None,
                     help="output directory")
    sub.add_argument("--profile", choices=sorted(PROFILES), default="desk",
                     help="scale tier (default desk)")
    sub.add_argument("--deterministic", action="store_true",
                     help="zero runtime columns so report files are byte-reproducible")


def cmd_gen(args) -> int:
    with open(args.spec) as f:
        spec = spec_from_dict(json.load(f))
    manifest = generate_dataset(spec, args.count, args.out,
                                noise_count=args.noise, seed=args.seed)
    print(f"wrote {manifest['count']} stimuli to {args.out} (seed {manifest['seed']})")
    return 0


def cmd_train(args) -> int:
    manifest, stimuli = load_dataset(args.dataset)
    profile = PROFILES[args.profile]
    model_cfg = UNetConfig(
        depth=profile.depth if args.depth is None else args.depth,
        base_filters=profile.base_filters if args.base_filters is None else args.base_filters,
        output_channels=args.output_channels,
        image_size=manifest["spec"]["image_size"],
    )
    tc = TrainConfig(
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        seed=rngmod.child_seed(args.seed, "train"),
    )
    model = build_unet(model_cfg, seed=rngmod.child_seed(args.seed, "init"))
    print(f"training {model_cfg.depth}-deep/{model_cfg.base_filters}-filter model "
          f"on {len(stimuli)} stimuli for {tc.epochs} epochs")
    _, history = train(model, stimuli, tc,
                       progress=lambda e, l: print(f"epoch {e}: loss {l:.6f}"))
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "checkpoint.bin")
    save_checkpoint(model, ckpt)
    with open(os.path.join(args.out, "loss.csv"), "w") as f:
        f.write("epoch,loss\n")
        for epoch, value in enumerate(history):
            f.write("%d,%.17g\n" % (epoch, value))
    print(f"saved {ckpt} (final loss {history[-1]:.6f})")
    return 0


def _parse_methods(text: str):
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    unknown = [m for m in methods if m not in METHOD_ORDER]
    if unknown:
        raise ExperimentError(f"unknown methods {unknown}; choose from {list(METHOD_ORDER)}")
    return methods


def cmd_bench(args) -> int:
    methods = _parse_methods(args.methods)
    report = run_bench_dir(
        args.dataset, methods, args.out,
        checkpoint=args.checkpoint, seed=args.seed,
        deterministic=args.deterministic,
        progress=lambda m, p, acc: print(f"{m} {p}: mean {acc:.4f}"),
    )
    print(summary_to_csv(report.summary, method_order=report.method_order), end="")
    print(f"report written to {args.out}")
    return 0


def cmd_experiment(args) -> int:
    methods = _parse_methods(args.methods) if args.methods else None
    cfg = make_experiment_config(
        args.id, profile=args.profile, seed=args.seed, out_dir=args.out,
        train_size=args.train_size, test_size=args.test_size,
        epochs=args.epochs, label_order=args.label_order,
        checkpoint=args.checkpoint, checkpoint_alt=args.checkpoint_alt,
        methods=methods,
    )
    report = run_experiment(cfg, deterministic=args.deterministic, progress=print)
    print(summary_to_csv(report.summary, method_order=report.method_order), end="")
    print(f"report written to {args.out}")
    return 0


def cmd_render(args) -> int:
    stimulus = load_stimulus(args.dataset, args.index)
    results = {}
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
        results["CNN"] = predict_labels(model, stimulus)
    if args.methods:
        manifest = load_manifest(args.dataset)
        grids = default_grids(manifest["spec"]["image_size"])
        for name in _parse_methods(args.methods):
            if name == "CNN":
                continue
            rng = rngmod.stream(args.seed, "render", name)
            results[name] = run_method(name, stimulus, grids[name][0],
                                       stimulus.point_set.k, rng)
    paths = render_stimulus_files(stimulus, args.out, "%04d" % args.index,
                                  results=results, png=args.png)
    for path in paths:
        print(path)
    return 0


def cmd_gradcheck(args) -> int:
    """Finite-difference check of a small f64 U-Net end to end."""
    config = UNetConfig(depth=2, base_filters=4, output_channels=3, image_size=8)
    spec = ShapeSceneSpec(
        image_size=8, scale_range=(1.5, 3.0), density_range=(8, 16),
        object_count_range=(2, 2), seed=rngmod.child_seed(args.seed, "gradcheck"),
    )
    stimulus = generate_shape_stimulus(spec)
    model = build_unet(config, seed=args.seed, dtype=np.float64)
    target = encode_target(stimulus, config.output_channels, np.float64)
    loss_fn = lambda: mse_loss(model.forward(stimulus.image), target)
    report = finite_diff_check(loss_fn, model.parameters(), h=1e-5, tol=1e-4,
                               max_entries=args.max_entries,
                               rng=rngmod.stream(args.seed, "gradcheck-entries"))
    print(report.summary())
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clusterlab",
        description="Train and evaluate a CNN clusterer against classical baselines "
                    "on synthetic 2D point scenes.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("gen", help="generate a stimulus dataset")
    sub.add_argument("--spec", required=True, help="scene spec JSON file")
    sub.add_argument("--count", type=int, required=True)
    sub.add_argument("--noise", type=int, default=0, help="noise pixels per stimulus")
    _add_common(sub)
    sub.set_defaults(func=cmd_gen)

    sub = subs.add_parser("train", help="train the CNN on a dataset")
    sub.add_argument("--dataset", required=True)
    sub.add_argument("--depth", type=int, default=None)
    sub.add_argument("--base-filters", type=int, default=None)
    sub.add_argument("--output-channels", type=int, default=3)
    sub.add_argument("--epochs", type=int, default=30)
    sub.add_argument("--batch-size", type=int, default=16)
    sub.add_argument("--learning-rate", type=float, default=0.001)
    _add_common(sub)
    sub.set_defaults(func=cmd_train)

    sub = subs.add_parser("bench", help="benchmark methods on a test dataset")
    sub.add_argument("--dataset", required=True)
    sub.add_argument("--methods", default=",".join(METHOD_ORDER))
    sub.add_argument("--checkpoint", default="", help="trained CNN (required when CNN runs)")
    _add_common(sub)
    sub.set_defaults(func=cmd_bench)

    sub = subs.add_parser("experiment", help="run one of the nine recipes")
    sub.add_argument("--id", type=int, required=True, choices=range(1, 10))
    sub.add_argument("--train-size", type=int, default=None)
    sub.add_argument("--test-size", type=int, default=None)
    sub.add_argument("--epochs", type=int, default=None)
    sub.add_argument("--label-order", choices=("topdown", "random"), default="topdown")
    sub.add_argument("--methods", default="")
    sub.add_argument("--checkpoint", default="", help="prerequisite checkpoint (exps 2, 7, 9)")
    sub.add_argument("--checkpoint-alt", default="",
                     help="second prerequisite (exp 7: 2-object model; exp 9: Gaussian model)")
    _add_common(sub)
    sub.set_defaults(func=cmd_experiment)

    sub = subs.add_parser("render", help="write grayscale renders of a stimulus")
    sub.add_argument("--dataset", required=True)
    sub.add_argument("--index", type=int, required=True)
    sub.add_argument("--checkpoint", default="", help="also render the CNN prediction")
    sub.add_argument("--methods", default="", help="baselines to render (default params)")
    sub.add_argument("--png", action="store_true", help="write PNG next to each PGM")
    _add_common(sub)
    sub.set_defaults(func=cmd_render)

    sub = subs.add_parser("gradcheck", help="finite-difference check of a small U-Net")
    sub.add_argument("--max-entries", type=int, default=0,
                     help="subsample per-parameter entries (0 = exhaustive)")
    _add_common(sub, out_default=".")
    sub.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ExperimentError, DatasetError, ConfigError, CheckpointError,
            SpecError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
