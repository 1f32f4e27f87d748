import json
import os

import numpy as np
import pytest

from anomseg import config as config_mod
from anomseg.cli import main

MICRO = {
    "phantom": {
        "height": 24,
        "width": 32,
        "bscans_per_volume": 2,
        "num_layer_classes": 4,
        "boundary_smoothness": 2.0,
        "layer_intensity_palette": [0.03, 0.55, 0.3, 0.75],
        "speckle_strength": 0.05,
        "anomaly_spec": [
            {"kind": "fluid_blob", "size_range": [3, 5], "count_range": [1, 1]}
        ],
        "seed": 11,
    },
    "dataset": {"train_healthy": 2, "val_healthy": 1, "val_diseased": 1,
                "test_diseased": 2, "test_healthy": 1},
    "network": {"depth": 3, "channels": [4, 6, 8], "num_classes": 4,
                "dropout_rate": 0.2, "input_shape": [24, 32]},
    "training": {"epochs": 1, "learning_rate": 1e-3, "batch_size": 2, "seed": 5},
    "inference": {"n_samples": 4, "seed": 13},
    "postproc": {"threshold": 0.005, "min_component_area": 2,
                 "closing_radius": 1, "opening_radius": 1},
    "eval": {"t_grid": [0.004, 0.008], "d_grid": [0.0, 0.5, 1.0],
             "p_grid": [0.2]},
}


def _write_config(tmp_path, **paths):
    data = json.loads(json.dumps(MICRO))
    data["paths"] = {
        "data_root": str(tmp_path / "data"),
        "model_path": str(tmp_path / "runs" / "model.bunw"),
        "output_dir": str(tmp_path / "runs"),
    }
    data["paths"].update(paths)
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(data, indent=2))
    return cfg_path


class TestConfig:
    def test_defaults_validate(self):
        cfg = config_mod.RunConfig()
        cfg.validate()

    def test_roundtrip_identity(self):
        cfg = config_mod.RunConfig()
        again = config_mod.from_dict(config_mod.to_dict(cfg))
        assert config_mod.to_dict(again) == config_mod.to_dict(cfg)
        assert config_mod.config_hash(again) == config_mod.config_hash(cfg)

    def test_unknown_section_rejected(self):
        with pytest.raises(config_mod.ConfigError, match="unknown config section"):
            config_mod.from_dict({"nonsense": {}})

    def test_unknown_key_rejected(self):
        with pytest.raises(config_mod.ConfigError, match="unknown key"):
            config_mod.from_dict({"training": {"epohcs": 3}})

    def test_overrides(self):
        cfg = config_mod.RunConfig()
        out = config_mod.apply_overrides(cfg, ["postproc.threshold=0.07",
                                               "network.dropout_rate=0.25"])
        assert out.postproc.threshold == 0.07
        assert out.network.dropout_rate == 0.25

    def test_bad_override_path(self):
        with pytest.raises(config_mod.ConfigError):
            config_mod.apply_overrides(config_mod.RunConfig(), ["postproc.nope=1"])

    def test_paper_default_values(self):
        cfg = config_mod.RunConfig()
        assert cfg.inference.n_samples == 50
        assert cfg.postproc.min_component_area == 10
        assert cfg.postproc.vote_thresholds == (3, 4)
        assert cfg.postproc.closing_radius == 4
        assert cfg.postproc.opening_radius == 2
        assert cfg.training.epochs == 25
        assert cfg.training.lr_decay_factor == 0.2
        assert cfg.training.lr_decay_every_epochs == 5


class TestExitCodes:
    def test_config_error_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"training\": {\"bogus\": 1}}")
        assert main(["train", "--config", str(bad)]) == 2

    def test_invalid_json_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["train", "--config", str(bad)]) == 2

    def test_missing_dataset_exit_3(self, tmp_path):
        cfg = _write_config(tmp_path)
        assert main(["train", "--config", str(cfg)]) == 3

    def test_missing_model_exit_3(self, tmp_path):
        cfg = _write_config(tmp_path)
        assert main(["gen-data", "--config", str(cfg)]) == 0
        assert main(["infer", "--config", str(cfg), "--split", "test"]) == 3

    def test_missing_masks_exit_3(self, tmp_path):
        cfg = _write_config(tmp_path)
        assert main(["gen-data", "--config", str(cfg)]) == 0
        assert main(["evaluate", "--config", str(cfg), "--split", "test"]) == 3


@pytest.fixture(scope="class")
def pipeline_dir(tmp_path_factory):
    """Run the whole micro pipeline once; commands are composable on disk."""
    tmp_path = tmp_path_factory.mktemp("pipeline")
    cfg = _write_config(tmp_path)
    for argv in (
        ["gen-data", "--config", str(cfg)],
        ["train", "--config", str(cfg)],
        ["infer", "--config", str(cfg), "--split", "val"],
        ["infer", "--config", str(cfg), "--split", "test"],
        ["sweep", "--config", str(cfg), "--kind", "threshold"],
        ["postprocess", "--config", str(cfg), "--split", "test", "--variant", "full"],
        ["postprocess", "--config", str(cfg), "--split", "test",
         "--variant", "thresholding_only"],
        ["evaluate", "--config", str(cfg), "--split", "test", "--variant", "full"],
        ["report", "--config", str(cfg)],
    ):
        assert main(argv) == 0, argv
    return tmp_path


class TestPipeline:
    def test_end_to_end_artifacts(self, pipeline_dir):
        runs = pipeline_dir / "runs"
        assert (runs / "model.bunw").exists()
        assert (runs / "training_log.csv").exists()
        assert (runs / "run.json").exists()
        assert (runs / "sweeps" / "threshold.csv").exists()
        assert (runs / "sweeps" / "threshold_best.json").exists()
        umaps = list((runs / "uncertainty").rglob("u_*.f32"))
        sidecars = list((runs / "uncertainty").rglob("u_*.json"))
        assert umaps and len(umaps) == len(sidecars)
        masks = list((runs / "masks" / "full").rglob("mask_*.pgm"))
        assert masks
        metrics = runs / "metrics" / "test-full"
        assert (metrics / "summary.json").exists()
        assert (metrics / "per_volume.csv").exists()
        assert (metrics / "volume_scores.csv").exists()
        svgs = list((runs / "report").glob("*.svg"))
        assert svgs

    def test_run_record_fields(self, pipeline_dir):
        record = json.loads((pipeline_dir / "runs" / "run.json").read_text())
        assert record["command"] == "report"
        assert len(record["config_hash"]) == 64
        assert "versions" in record and "numpy" in record["versions"]
        assert "seeds" in record

    def test_summary_contains_separation_and_correlation(self, pipeline_dir):
        summary = json.loads(
            (pipeline_dir / "runs" / "metrics" / "test-full" / "summary.json").read_text()
        )
        assert "pixel" in summary
        assert "separation" in summary  # test split has healthy and diseased
        assert 0.0 <= summary["separation"]["auc"] <= 1.0

    def test_sweep_best_in_grid(self, pipeline_dir):
        best = json.loads(
            (pipeline_dir / "runs" / "sweeps" / "threshold_best.json").read_text()
        )["best"]
        assert best in MICRO["eval"]["t_grid"]


class TestEvaluateFixture:
    def test_perfect_prediction_dice_one(self, tmp_path):
        # build a fixture where the stored masks equal the ground truth
        cfg_path = _write_config(tmp_path)
        assert main(["gen-data", "--config", str(cfg_path)]) == 0
        cfg = config_mod.load(cfg_path)
        from anomseg import phantom, pgmio, uncertainty

        manifest = phantom.load_manifest(cfg.paths.data_root)
        for entry in phantom.volumes_in_split(manifest, "test"):
            vol = phantom.load_volume(cfg.paths.data_root, entry)
            mdir = os.path.join(cfg.paths.output_dir, "masks", "full", entry["volume_id"])
            udir = os.path.join(cfg.paths.output_dir, "uncertainty", entry["volume_id"])
            os.makedirs(mdir, exist_ok=True)
            os.makedirs(udir, exist_ok=True)
            for i in range(int(entry["bscans"])):
                gt = (vol.anomaly_masks[i] if vol.anomaly_masks is not None
                      else np.zeros((cfg.phantom.height, cfg.phantom.width), np.uint8))
                pgmio.write_pgm(os.path.join(mdir, f"mask_{i}.pgm"), gt * 255)
                umap = uncertainty.UncertaintyMap(gt * 0.05, 4, 0.2, "mc_variance")
                uncertainty.save_map(os.path.join(udir, f"u_{i}.f32"), umap)
        assert main(["evaluate", "--config", str(cfg_path), "--split", "test"]) == 0
        summary = json.loads(
            (tmp_path / "runs" / "metrics" / "test-full" / "summary.json").read_text()
        )
        assert summary["pixel"]["dice_mean"] == 1.0
        assert summary["separation"]["auc"] == 1.0


class TestDeterminism:
    def test_repeat_pipeline_byte_identical(self, tmp_path):
        outputs = {}
        for tag in ("one", "two"):
            base = tmp_path / tag
            base.mkdir()
            cfg = _write_config(
                base,
                data_root=str(base / "data"),
                model_path=str(base / "runs" / "model.bunw"),
                output_dir=str(base / "runs"),
            )
            for argv in (
                ["gen-data", "--config", str(cfg)],
                ["train", "--config", str(cfg)],
                ["infer", "--config", str(cfg), "--split", "test"],
                ["postprocess", "--config", str(cfg), "--split", "test"],
                ["evaluate", "--config", str(cfg), "--split", "test"],
            ):
                assert main(argv) == 0
            files = {}
            for pattern in ("masks/**/*.pgm", "metrics/**/*.csv", "training_log.csv",
                            "**/*.f32"):
                for path in sorted((base / "runs").glob(pattern)):
                    files[str(path.relative_to(base))] = path.read_bytes()
            outputs[tag] = files
        assert outputs["one"].keys() == outputs["two"].keys()
        for rel in outputs["one"]:
            assert outputs["one"][rel] == outputs["two"][rel], rel


class TestEntropyAndDropoutSweep:
    def test_entropy_source_pipeline(self, pipeline_dir):
        cfg = pipeline_dir / "config.json"
        assert main(["postprocess", "--config", str(cfg), "--split", "test",
                     "--source", "entropy"]) == 0
        assert main(["evaluate", "--config", str(cfg), "--split", "test",
                     "--source", "entropy"]) == 0
        masks = list((pipeline_dir / "runs" / "masks" / "full-entropy").rglob("mask_*.pgm"))
        assert masks
        summary = json.loads((pipeline_dir / "runs" / "metrics" /
                              "test-full-entropy" / "summary.json").read_text())
        assert summary["source"] == "entropy"

    def test_dropout_sweep_micro(self, pipeline_dir):
        cfg = pipeline_dir / "config.json"
        assert main(["sweep", "--config", str(cfg), "--kind", "dropout"]) == 0
        best = json.loads((pipeline_dir / "runs" / "sweeps" /
                           "dropout_best.json").read_text())
        assert best["best"] == 0.2  # single-element grid returns that p
        rows = (pipeline_dir / "runs" / "sweeps" / "dropout.csv").read_text().strip().splitlines()
        assert len(rows) == 2  # header + one grid point
