"""Command line interface.

Subcommands cover the pieces of the study individually (make-scene,
train-classifier, train-sr, upscale, classify, psnr) plus the end-to-end
`experiment` driver. Exit codes: 0 success, 2 usage error, 1 runtime
failure (bad files, shape mismatches, training errors).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import classifier as clf
from . import metrics, pipeline, raster, srcnn, synth
from .optim import SgdConfig, write_loss_trace


def _add_seed(parser):
    parser.add_argument("--seed", type=int, default=None,
                        help="override every RNG seed used by this command")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="landsr",
        description="Multispectral upscaling and land-cover classification toolkit.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("make-scene", help="generate a synthetic labeled scene")
    sp.add_argument("output_dir")
    sp.add_argument("--width", type=int, default=128)
    sp.add_argument("--height", type=int, default=128)
    sp.add_argument("--noise", type=float, default=0.02)
    _add_seed(sp)

    sp = sub.add_parser("train-classifier", help="train the land-cover classifier")
    sp.add_argument("scene_manifest")
    sp.add_argument("regions", help="JSON file of labeled rectangles")
    sp.add_argument("output_model")
    sp.add_argument("--hidden", type=int, nargs="+", default=[24])
    sp.add_argument("--max-iter", type=int, default=300)
    sp.add_argument("--grad-tol", type=float, default=1e-6)
    sp.add_argument("--feature-mode", default="pooled2x2",
                    choices=sorted(raster.FEATURE_MODES))
    sp.add_argument("--loss-trace", default=None)
    _add_seed(sp)

    sp = sub.add_parser("train-sr", help="train per-band super-resolution networks")
    sp.add_argument("scene_manifest")
    sp.add_argument("output_dir")
    sp.add_argument("--kernels", type=int, nargs="+", default=list(srcnn.DEFAULT_KERNELS))
    sp.add_argument("--feature-maps", type=int, nargs="+",
                    default=list(srcnn.DEFAULT_FEATURE_MAPS))
    sp.add_argument("--patch-size", type=int, default=33)
    sp.add_argument("--stride", type=int, default=14)
    sp.add_argument("--learning-rate", type=float, default=0.5)
    sp.add_argument("--batch-size", type=int, default=8)
    sp.add_argument("--epochs", type=int, default=30)
    _add_seed(sp)

    sp = sub.add_parser("upscale", help="upscale a scene by an integer factor")
    sp.add_argument("scene_manifest")
    sp.add_argument("output_dir")
    sp.add_argument("--method", required=True, choices=pipeline.METHODS)
    sp.add_argument("--factor", type=int, default=3)
    sp.add_argument("--models", default=None,
                    help="directory of srcnn_<band>.json models (srcnn method)")

    sp = sub.add_parser("classify", help="classify a scene into a class map")
    sp.add_argument("scene_manifest")
    sp.add_argument("model")
    sp.add_argument("output_map")

    sp = sub.add_parser("psnr", help="chained per-step PSNR for one method")
    sp.add_argument("scene_manifest")
    sp.add_argument("output_csv")
    sp.add_argument("--method", required=True, choices=pipeline.METHODS)
    sp.add_argument("--steps", type=int, default=3)
    sp.add_argument("--models", default=None)

    sp = sub.add_parser("experiment", help="run the full comparative study")
    sp.add_argument("config", help="experiment config JSON")
    _add_seed(sp)

    return p


# ---------------------------------------------------------------------------
# Command bodies
# ---------------------------------------------------------------------------


def _cmd_make_scene(args) -> int:
    seed = 0 if args.seed is None else args.seed
    layout = synth.default_layout(args.width, args.height)
    scene, truth = synth.make_synthetic_scene(layout, noise_level=args.noise, seed=seed)
    os.makedirs(args.output_dir, exist_ok=True)
    manifest = os.path.join(args.output_dir, "scene.json")
    raster.write_scene(scene, manifest)
    raster.write_class_map(truth, os.path.join(args.output_dir, "truth.pgm"))
    regions = synth.default_training_regions(layout)
    with open(os.path.join(args.output_dir, "regions.json"), "w") as fh:
        json.dump(
            {
                "class_names": list(raster.DEFAULT_CLASS_NAMES),
                "regions": [
                    {"x": x, "y": y, "w": w, "h": h,
                     "class": raster.DEFAULT_CLASS_NAMES[c]}
                    for (x, y, w, h), c in regions
                ],
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    print(f"scene written to {manifest}")
    return 0


def _cmd_train_classifier(args) -> int:
    scene = raster.load_scene(args.scene_manifest)
    regions, class_names = raster.read_region_file(args.regions)
    data = raster.label_regions(scene, regions, args.feature_mode, class_names)
    seed = 7 if args.seed is None else args.seed
    model, trace = clf.train_classifier(data, hidden_dims=tuple(args.hidden),
                                        max_iter=args.max_iter,
                                        grad_tol=args.grad_tol, seed=seed)
    clf.save_classifier(model, args.output_model)
    if args.loss_trace:
        write_loss_trace(args.loss_trace, trace)
    preds = clf.classify_features(model, data)
    _, acc = clf.evaluate(preds, data.labels)
    print(f"classifier saved to {args.output_model} "
          f"(training accuracy {acc:.4f}, {len(trace) - 1} iterations)")
    return 0


def _cmd_train_sr(args) -> int:
    scene = raster.load_scene(args.scene_manifest)
    seed = 11 if args.seed is None else args.seed
    config = SgdConfig(args.learning_rate, args.batch_size, args.epochs, seed)
    os.makedirs(args.output_dir, exist_ok=True)
    for band in scene.bands:
        pairs = srcnn.make_training_pairs(band, 3, args.patch_size, args.stride, seed)
        model, trace = srcnn.train_srcnn(pairs, config, init_seed=seed,
                                         kernel_sizes=tuple(args.kernels),
                                         feature_maps=tuple(args.feature_maps))
        path = os.path.join(args.output_dir, f"srcnn_{band.band_id}.json")
        srcnn.save_srcnn(model, path)
        write_loss_trace(os.path.join(args.output_dir, f"loss_{band.band_id}.csv"),
                         trace)
        print(f"{band.band_id}: final loss {trace[-1]:.6f} -> {path}")
    return 0


def _load_sr_models(models_dir, scene):
    if models_dir is None:
        raise FileNotFoundError("--models is required for the srcnn method")
    models = {}
    for band in scene.bands:
        path = os.path.join(models_dir, f"srcnn_{band.band_id}.json")
        models[band.band_id] = srcnn.load_srcnn(path)
    return models


def _cmd_upscale(args) -> int:
    scene = raster.load_scene(args.scene_manifest)
    models = None
    if args.method == "srcnn":
        models = _load_sr_models(args.models, scene)
    upscaler = pipeline.method_upscaler(args.method, models)
    out_scene = pipeline.upscale_scene(scene, upscaler, args.factor)
    os.makedirs(args.output_dir, exist_ok=True)
    manifest = os.path.join(args.output_dir, "scene.json")
    raster.write_scene(out_scene, manifest)
    print(f"{args.method} x{args.factor} scene written to {manifest}")
    return 0


def _cmd_classify(args) -> int:
    scene = raster.load_scene(args.scene_manifest)
    model = clf.load_classifier(args.model)
    class_map = clf.classify_scene(model, scene)
    raster.write_class_map(class_map, args.output_map)
    counts = {name: int(np.sum(class_map.labels == idx))
              for idx, name in enumerate(class_map.class_names)}
    print(f"class map written to {args.output_map} {counts}")
    return 0


def _cmd_psnr(args) -> int:
    scene = raster.load_scene(args.scene_manifest)
    models = None
    if args.method == "srcnn":
        models = _load_sr_models(args.models, scene)
    upscaler = pipeline.method_upscaler(args.method, models)
    report = metrics.chained_psnr(scene, upscaler, args.method, args.steps)
    metrics.write_psnr_csv(report, args.output_csv)
    print(f"{len(report)} PSNR rows written to {args.output_csv}")
    return 0


def _cmd_experiment(args) -> int:
    config = pipeline.load_config(args.config)
    if args.seed is not None:
        pipeline.override_seeds(config, args.seed)
    result = pipeline.run_experiment(config)
    print(f"experiment complete: {len(result.class_maps)} class maps, "
          f"PSNR report at {result.psnr_csv}")
    return 0


_COMMANDS = {
    "make-scene": _cmd_make_scene,
    "train-classifier": _cmd_train_classifier,
    "train-sr": _cmd_train_sr,
    "upscale": _cmd_upscale,
    "classify": _cmd_classify,
    "psnr": _cmd_psnr,
    "experiment": _cmd_experiment,
}


def cli_dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
