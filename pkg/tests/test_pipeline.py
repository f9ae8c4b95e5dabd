"""Experiment config, orchestration outputs, and the PSNR plot."""

import json
import os

import numpy as np
import pytest

from landsr import pipeline, raster, synth
from landsr.metrics import PsnrReport, PsnrRow, read_psnr_csv
from landsr.pipeline import (
    ClassifierSettings,
    ExperimentConfig,
    ExperimentError,
    SrcnnSettings,
)
from landsr.synth import DEEP_FOREST, LIGHT_FOREST, RIVER, SceneLayout


def small_layout(n=16):
    regions = [((0, 0, n // 2, n), DEEP_FOREST),
               ((n // 2, 0, n - n // 2, n), LIGHT_FOREST)]
    return SceneLayout(n, n, regions, [(0, n - 3, n, 3, 0)])


def write_inputs(dirpath, n=16, seed=5):
    """Scene manifest + region file for a tiny three-class scene."""
    scene, _ = synth.make_synthetic_scene(small_layout(n), 0.02, seed)
    manifest = os.path.join(dirpath, "scene.json")
    raster.write_scene(scene, manifest)
    regions = os.path.join(dirpath, "regions.json")
    with open(regions, "w") as fh:
        json.dump({
            "class_names": list(raster.DEFAULT_CLASS_NAMES),
            "regions": [
                {"x": 1, "y": 1, "w": 5, "h": 6, "class": "deep_forest"},
                {"x": n // 2 + 1, "y": 1, "w": 5, "h": 6, "class": "light_forest"},
                {"x": 2, "y": n - 3, "w": n - 4, "h": 2, "class": "river"},
            ],
        }, fh)
    return manifest, regions


def small_config(dirpath, out_name="out", methods=("bilinear",), **srcnn_kw):
    manifest, regions = write_inputs(dirpath)
    return ExperimentConfig(
        scene_manifest=manifest,
        regions=regions,
        output_dir=os.path.join(dirpath, out_name),
        methods=tuple(methods),
        steps=1,
        classifier=ClassifierSettings(hidden_dims=(6,), max_iter=40, seed=7),
        srcnn=SrcnnSettings(kernel_sizes=(3, 3, 1), feature_maps=(2, 2),
                            patch_size=12, stride=4, learning_rate=0.05,
                            batch_size=4, epochs=1, seed=11, **srcnn_kw),
    )


# ---------------------------------------------------------------------------
# Config loading and validation
# ---------------------------------------------------------------------------


class TestConfig:
    def test_defaults_from_minimal_document(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(
            {"scene_manifest": "scene.json", "regions": "regions.json"}))
        config = pipeline.load_config(path)
        assert config.methods == ("bilinear", "bicubic", "srcnn")
        assert config.steps == 3
        assert config.scene_manifest == str(tmp_path / "scene.json")
        assert config.output_dir == str(tmp_path / "out")
        assert config.classifier.hidden_dims == (24,)
        assert config.srcnn.kernel_sizes == (9, 3, 1)
        assert config.srcnn.feature_maps == (64, 32)

    def test_lists_coerced_to_tuples(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({
            "scene_manifest": "s.json", "regions": "r.json",
            "methods": ["bicubic"],
            "classifier": {"hidden_dims": [8, 4]},
            "srcnn": {"kernel_sizes": [5, 3, 1], "feature_maps": [4, 2]},
        }))
        config = pipeline.load_config(path)
        assert config.classifier.hidden_dims == (8, 4)
        assert config.srcnn.kernel_sizes == (5, 3, 1)
        assert config.srcnn.feature_maps == (4, 2)
        assert config.methods == ("bicubic",)

    def test_absolute_paths_kept(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(
            {"scene_manifest": "/abs/scene.json", "regions": "r.json"}))
        assert pipeline.load_config(path).scene_manifest == "/abs/scene.json"

    def test_manifest_key_required(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"regions": "r.json"}))
        with pytest.raises(KeyError):
            pipeline.load_config(path)

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError, match="unknown method"):
            ExperimentConfig("s", "r", "o", methods=("nearest",))

    def test_zero_steps_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig("s", "r", "o", steps=0)

    def test_empty_methods_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig("s", "r", "o", methods=())

    def test_validate_paths_flags_missing_file(self, tmp_path):
        config = ExperimentConfig(str(tmp_path / "nope.json"),
                                  str(tmp_path / "r.json"), "o")
        with pytest.raises(FileNotFoundError):
            config.validate_paths()

    def test_override_seeds_touches_both_trainers(self, tmp_path):
        config = ExperimentConfig("s", "r", "o")
        pipeline.override_seeds(config, 99)
        assert config.classifier.seed == 99
        assert config.srcnn.seed == 99


# ---------------------------------------------------------------------------
# Method plumbing
# ---------------------------------------------------------------------------


class TestMethodUpscaler:
    def test_plain_methods_need_no_models(self):
        from landsr.interp import upscale_bicubic, upscale_bilinear
        assert pipeline.method_upscaler("bilinear") is upscale_bilinear
        assert pipeline.method_upscaler("bicubic") is upscale_bicubic

    def test_srcnn_without_models_rejected(self):
        with pytest.raises(ExperimentError):
            pipeline.method_upscaler("srcnn", {})

    def test_srcnn_dispatches_on_band_id(self, rng):
        from landsr.srcnn import build_srcnn, upscale_srcnn
        from conftest import rand_band
        band = rand_band(rng, 6, 6, "B2")
        models = {"B2": build_srcnn((3, 3, 1), (2, 2))}
        up = pipeline.method_upscaler("srcnn", models)(band, 3)
        expected = upscale_srcnn(models["B2"], band, 3)
        np.testing.assert_array_equal(up.samples, expected.samples)

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError):
            pipeline.method_upscaler("nearest")

    def test_upscale_scene_triples_dims_and_keeps_ids(self, rng):
        from landsr.interp import upscale_bilinear
        from conftest import rand_scene
        scene = rand_scene(rng, 6, 8, n_bands=3)
        out = pipeline.upscale_scene(scene, upscale_bilinear, 3)
        assert out.width == 24 and out.height == 18
        assert [b.band_id for b in out.bands] == ["B1", "B2", "B3"]


class TestTrainExperimentSrcnn:
    def test_shared_model_reuses_one_network(self, tmp_path):
        scene, _ = synth.make_synthetic_scene(small_layout(24), 0.02, seed=1)
        config = small_config(str(tmp_path), shared_model=True)
        models, traces = pipeline.train_experiment_srcnn(scene, config)
        assert set(models) == {b.band_id for b in scene.bands}
        first = next(iter(models.values()))
        assert all(m is first for m in models.values())
        assert set(traces) == {"shared"}

    def test_per_band_models_are_distinct(self, tmp_path):
        scene, _ = synth.make_synthetic_scene(small_layout(24), 0.02, seed=1)
        config = small_config(str(tmp_path))
        models, traces = pipeline.train_experiment_srcnn(scene, config)
        assert len({id(m) for m in models.values()}) == len(scene.bands)
        assert set(traces) == set(models)


# ---------------------------------------------------------------------------
# run_experiment
# ---------------------------------------------------------------------------


class TestRunExperiment:
    def test_bilinear_study_produces_full_output_tree(self, tmp_path):
        config = small_config(str(tmp_path))
        result = pipeline.run_experiment(config)
        out = config.output_dir

        assert set(result.class_maps) == {("bilinear", 0), ("bilinear", 1)}
        step0 = raster.read_class_map(os.path.join(out, "maps", "bilinear_step0.pgm"))
        step1 = raster.read_class_map(os.path.join(out, "maps", "bilinear_step1.pgm"))
        assert step0.labels.shape == (8, 8)  # floor(16/2)
        assert step1.labels.shape == (24, 24)  # floor(3*16/2)

        report = read_psnr_csv(result.psnr_csv)
        assert len(report) == 6  # 6 bands x 1 step
        assert {r.method for r in report.rows} == {"bilinear"}

        assert os.path.exists(result.trace_paths["classifier"])
        assert os.path.exists(result.model_paths["classifier"])
        svg = open(os.path.join(out, "plots", "psnr.svg")).read()
        assert "<svg" in svg
        with open(os.path.join(out, "run.meta")) as fh:
            meta = json.load(fh)
        assert meta["seeds"] == {"classifier": 7, "srcnn": 11}
        assert meta["steps"] == 1
        assert not os.path.exists(os.path.join(out, "FAILED"))

    def test_srcnn_study_writes_models_and_traces(self, tmp_path):
        config = small_config(str(tmp_path), methods=("srcnn",))
        result = pipeline.run_experiment(config)
        out = config.output_dir
        for band_id in ("B1", "B2", "B3", "B4", "B5", "B7"):
            assert os.path.exists(os.path.join(out, "models", f"srcnn_{band_id}.json"))
            assert os.path.exists(os.path.join(out, "reports", f"srcnn_loss_{band_id}.csv"))
        assert set(result.class_maps) == {("srcnn", 0), ("srcnn", 1)}

    def test_reruns_are_bit_identical(self, tmp_path):
        config_a = small_config(str(tmp_path), out_name="out_a")
        result_a = pipeline.run_experiment(config_a)
        config_b = small_config(str(tmp_path), out_name="out_b")
        result_b = pipeline.run_experiment(config_b)

        with open(result_a.psnr_csv, "rb") as fh:
            csv_a = fh.read()
        with open(result_b.psnr_csv, "rb") as fh:
            csv_b = fh.read()
        assert csv_a == csv_b
        for key, path_a in result_a.class_maps.items():
            with open(path_a, "rb") as fh:
                map_a = fh.read()
            with open(result_b.class_maps[key], "rb") as fh:
                map_b = fh.read()
            assert map_a == map_b, f"class map differs for {key}"

    def test_missing_scene_leaves_validate_marker(self, tmp_path):
        config = small_config(str(tmp_path))
        os.remove(config.scene_manifest)
        with pytest.raises(ExperimentError, match="validate"):
            pipeline.run_experiment(config)
        marker = open(os.path.join(config.output_dir, "FAILED")).read()
        assert "stage: validate" in marker

    def test_corrupt_manifest_leaves_load_scene_marker(self, tmp_path):
        config = small_config(str(tmp_path))
        with open(config.scene_manifest, "w") as fh:
            fh.write("not json at all")
        with pytest.raises(ExperimentError, match="load_scene"):
            pipeline.run_experiment(config)
        marker = open(os.path.join(config.output_dir, "FAILED")).read()
        assert "stage: load_scene" in marker


# ---------------------------------------------------------------------------
# Plot rendering
# ---------------------------------------------------------------------------


class TestRenderPsnrPlot:
    def test_writes_svg_with_curves(self, tmp_path):
        rows = [PsnrRow("B1", "bicubic", s, 30.0 + s) for s in (1, 2, 3)]
        rows += [PsnrRow("B1", "bilinear", 1, float("inf"))]
        path = tmp_path / "plot.svg"
        pipeline.render_psnr_plot(PsnrReport(rows), path)
        text = path.read_text()
        assert "<svg" in text
        assert path.stat().st_size > 1000

    def test_empty_report_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="empty"):
            pipeline.render_psnr_plot(PsnrReport([]), tmp_path / "plot.svg")
