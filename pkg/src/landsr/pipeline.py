"""Experiment orchestration: config, the upscale-then-classify study, reports.

The experiment mirrors the comparative protocol end to end: train the
classifier once on labeled regions, train one super-resolution network per
band from the scene itself, then for every requested method and step
produce the 3^n-upscaled scene, classify it, and score each method's
chained per-step PSNR. All outputs land under one directory tree:
maps/ (PGM class maps), reports/ (CSV), plots/ (SVG), models/, run.meta.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import classifier as clf
from . import metrics, raster, srcnn
from .interp import upscale_bicubic, upscale_bilinear
from .optim import SgdConfig, write_loss_trace

METHODS = ("bilinear", "bicubic", "srcnn")


class ExperimentError(RuntimeError):
    """An experiment stage failed; the message names the stage."""


@dataclass
class ClassifierSettings:
    hidden_dims: tuple = (24,)
    max_iter: int = 300
    grad_tol: float = 1e-6
    seed: int = 7
    feature_mode: str = "pooled2x2"


@dataclass
class SrcnnSettings:
    kernel_sizes: tuple = srcnn.DEFAULT_KERNELS
    feature_maps: tuple = srcnn.DEFAULT_FEATURE_MAPS
    patch_size: int = 33
    stride: int = 14
    learning_rate: float = 0.5
    batch_size: int = 8
    epochs: int = 30
    seed: int = 11
    shared_model: bool = False


@dataclass
class ExperimentConfig:
    scene_manifest: str
    regions: str
    output_dir: str
    methods: tuple = ("bilinear", "bicubic", "srcnn")
    steps: int = 3
    classifier: ClassifierSettings = field(default_factory=ClassifierSettings)
    srcnn: SrcnnSettings = field(default_factory=SrcnnSettings)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.methods:
            raise ValueError("at least one method required")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r} (choose from {METHODS})")

    def validate_paths(self) -> None:
        for path in (self.scene_manifest, self.regions):
            if not os.path.exists(path):
                raise FileNotFoundError(path)


def load_config(path) -> ExperimentConfig:
    """Read an experiment config from JSON; omitted keys take defaults."""
    with open(path) as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    cls = ClassifierSettings(**{k: tuple(v) if k == "hidden_dims" else v
                                for k, v in doc.get("classifier", {}).items()})
    sr_doc = {k: tuple(v) if k in ("kernel_sizes", "feature_maps") else v
              for k, v in doc.get("srcnn", {}).items()}
    return ExperimentConfig(
        scene_manifest=resolve(doc["scene_manifest"]),
        regions=resolve(doc["regions"]),
        output_dir=resolve(doc.get("output_dir", "out")),
        methods=tuple(doc.get("methods", ("bilinear", "bicubic", "srcnn"))),
        steps=int(doc.get("steps", 3)),
        classifier=cls,
        srcnn=SrcnnSettings(**sr_doc),
    )


def override_seeds(config: ExperimentConfig, seed: int) -> ExperimentConfig:
    config.classifier.seed = seed
    config.srcnn.seed = seed
    return config


@dataclass
class ExperimentResult:
    class_maps: dict = field(default_factory=dict)  # (method, step) -> path
    psnr_csv: str = ""
    trace_paths: dict = field(default_factory=dict)
    model_paths: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Training helpers shared with the CLI
# ---------------------------------------------------------------------------


def train_experiment_classifier(scene, config: ExperimentConfig):
    regions, class_names = raster.read_region_file(config.regions)
    data = raster.label_regions(scene, regions, config.classifier.feature_mode,
                                class_names)
    return clf.train_classifier(
        data,
        hidden_dims=config.classifier.hidden_dims,
        max_iter=config.classifier.max_iter,
        grad_tol=config.classifier.grad_tol,
        seed=config.classifier.seed,
    )


def train_experiment_srcnn(scene, config: ExperimentConfig):
    """Train SR models from the scene itself. Returns (models, traces).

    ``models`` maps band_id -> SrcnnModel; with ``shared_model`` every band
    shares one network trained on the pooled patch set.
    """
    s = config.srcnn
    sgd = SgdConfig(s.learning_rate, s.batch_size, s.epochs, s.seed)
    models, traces = {}, {}
    if s.shared_model:
        stacks = [srcnn.make_training_pairs(b, 3, s.patch_size, s.stride, s.seed)
                  for b in scene.bands]
        pairs = srcnn.SrPairSet(
            np.concatenate([p.degraded for p in stacks]),
            np.concatenate([p.target for p in stacks]),
            s.patch_size,
        )
        model, trace = srcnn.train_srcnn(pairs, sgd, init_seed=s.seed,
                                         kernel_sizes=s.kernel_sizes,
                                         feature_maps=s.feature_maps)
        for b in scene.bands:
            models[b.band_id] = model
        traces["shared"] = trace
    else:
        for b in scene.bands:
            pairs = srcnn.make_training_pairs(b, 3, s.patch_size, s.stride, s.seed)
            model, trace = srcnn.train_srcnn(pairs, sgd, init_seed=s.seed,
                                             kernel_sizes=s.kernel_sizes,
                                             feature_maps=s.feature_maps)
            models[b.band_id] = model
            traces[b.band_id] = trace
    return models, traces


def method_upscaler(method: str, models=None):
    """Band upscaler callable for one method (srcnn needs per-band models)."""
    if method == "bilinear":
        return upscale_bilinear
    if method == "bicubic":
        return upscale_bicubic
    if method == "srcnn":
        if not models:
            raise ExperimentError("srcnn method requires trained models")
        return lambda band, factor: srcnn.upscale_srcnn(models[band.band_id], band, factor)
    raise ValueError(f"unknown method {method!r}")


def upscale_scene(scene, upscaler, factor: int):
    return raster.MultispectralScene([upscaler(b, factor) for b in scene.bands])


# ---------------------------------------------------------------------------
# The experiment
# ---------------------------------------------------------------------------


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run the full upscale-then-classify study.

    Stages: load scene, train classifier (once, reused everywhere), train
    per-band SR networks, classify every (method, step 0..steps) scene,
    compute chained PSNR per method, write reports and metadata. On
    failure a FAILED marker naming the stage is left in the output tree.
    """
    out = config.output_dir
    for sub in ("maps", "reports", "plots", "models"):
        os.makedirs(os.path.join(out, sub), exist_ok=True)
    result = ExperimentResult()
    started = time.time()
    durations = {}

    stage = "validate"
    try:
        config.validate_paths()

        stage = "load_scene"
        t0 = time.time()
        scene = raster.load_scene(config.scene_manifest)
        durations[stage] = time.time() - t0

        stage = "train_classifier"
        t0 = time.time()
        model, cls_trace = train_experiment_classifier(scene, config)
        cls_model_path = os.path.join(out, "models", "classifier.json")
        clf.save_classifier(model, cls_model_path)
        result.model_paths["classifier"] = cls_model_path
        trace_path = os.path.join(out, "reports", "classifier_loss.csv")
        write_loss_trace(trace_path, cls_trace)
        result.trace_paths["classifier"] = trace_path
        durations[stage] = time.time() - t0

        stage = "train_srcnn"
        t0 = time.time()
        sr_models, sr_traces = {}, {}
        if "srcnn" in config.methods:
            sr_models, sr_traces = train_experiment_srcnn(scene, config)
            for key, trace in sr_traces.items():
                path = os.path.join(out, "reports", f"srcnn_loss_{key}.csv")
                write_loss_trace(path, trace)
                result.trace_paths[f"srcnn_{key}"] = path
            for band_id in sorted(set(sr_models)):
                path = os.path.join(out, "models", f"srcnn_{band_id}.json")
                srcnn.save_srcnn(sr_models[band_id], path)
                result.model_paths[f"srcnn_{band_id}"] = path
        durations[stage] = time.time() - t0

        stage = "method_chains"
        t0 = time.time()
        rows = []
        for method in config.methods:
            upscaler = method_upscaler(method, sr_models)
            previous = scene
            for step in range(0, config.steps + 1):
                if step == 0:
                    current = scene
                else:
                    current = upscale_scene(previous, upscaler, 3)
                    for band in current.bands:
                        rows.append(metrics.PsnrRow(
                            band.band_id, method, step,
                            metrics.psnr(metrics.downsample_block_mean(band, 3),
                                         previous.band(band.band_id)),
                        ))
                class_map = clf.classify_scene(model, current)
                path = os.path.join(out, "maps", f"{method}_step{step}.pgm")
                raster.write_class_map(class_map, path)
                result.class_maps[(method, step)] = path
                previous = current
        report = metrics.PsnrReport(rows)
        durations[stage] = time.time() - t0

        stage = "reports"
        result.psnr_csv = os.path.join(out, "reports", "psnr.csv")
        metrics.write_psnr_csv(report, result.psnr_csv)
        plot_path = os.path.join(out, "plots", "psnr.svg")
        render_psnr_plot(report, plot_path)
        result.metadata = {
            "seeds": {"classifier": config.classifier.seed, "srcnn": config.srcnn.seed},
            "methods": list(config.methods),
            "steps": config.steps,
            "scene": config.scene_manifest,
            "durations_sec": {k: round(v, 3) for k, v in durations.items()},
            "total_sec": round(time.time() - started, 3),
        }
        with open(os.path.join(out, "run.meta"), "w") as fh:
            json.dump(result.metadata, fh, indent=2)
            fh.write("\n")
    except Exception as exc:
        marker = os.path.join(out, "FAILED")
        with open(marker, "w") as fh:
            fh.write(f"stage: {stage}\nerror: {exc}\n")
        raise ExperimentError(f"stage {stage!r} failed: {exc}") from exc

    return result


# ---------------------------------------------------------------------------
# Plotting
# ---------------------------------------------------------------------------


def render_psnr_plot(report: metrics.PsnrReport, path) -> None:
    """One PSNR-vs-step curve per (band, method); SVG output.

    Rows with the infinity sentinel are annotated rather than plotted.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not report.rows:
        raise ValueError("empty PSNR report")

    groups = {}
    inf_rows = []
    for r in report.rows:
        if np.isinf(r.psnr_db):
            inf_rows.append(r)
        else:
            groups.setdefault((r.band_id, r.method), []).append((r.step, r.psnr_db))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    methods = sorted({m for _, m in groups})
    styles = {m: s for m, s in zip(methods, ("-", "--", ":", "-."))}
    for (band, method), pts in sorted(groups.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                styles.get(method, "-"), marker="o", markersize=3,
                label=f"{band} ({method})")
    ax.set_xlabel("upscaling step (3x per step)")
    ax.set_ylabel("PSNR vs previous step [dB]")
    if inf_rows:
        ax.annotate(f"{len(inf_rows)} identical-image rows (infinite PSNR) omitted",
                    xy=(0.02, 0.02), xycoords="axes fraction", fontsize=8)
    if groups:
        ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
