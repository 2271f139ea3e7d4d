import json

import numpy as np
import pytest

from gatomics.cli import main
from gatomics.synth import SynthConfig, generate


def small_corpus(tmp_path, seed=0, **overrides):
    base = dict(n_samples=80, n_classes=4, nodes=16, p_intra=0.4, p_inter=0.05,
                features_per_layer=(24, 10, 14), informative_fraction=0.25,
                signal_strength=4.0, noise_sd=1.0, seed=seed)
    base.update(overrides)
    return generate(SynthConfig(**base), tmp_path)


def write_train_config(tmp_path, data_dir, **overrides):
    cfg = {
        "layers": [
            {"name": "mrna", "path": str(data_dir / "mrna.csv"), "log2": True},
            {"name": "mirna", "path": str(data_dir / "mirna.csv")},
            {"name": "methylation", "path": str(data_dir / "methylation.csv")},
        ],
        "labels": str(data_dir / "labels.csv"),
        "edges": str(data_dir / "edges.tsv"),
        "feature_map": str(data_dir / "feature_map.tsv"),
        "node_file": str(data_dir / "nodes.txt"),
        "score_threshold": 0.7,
        "train": {"epochs": 2, "lr": 0.01, "k_folds": 2, "dropout": 0.5},
        "hidden_dims": [6, 4],
        "readout": "mean",
        "seed": 3,
    }
    cfg.update(overrides)
    path = tmp_path / "pipeline.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


class TestSynthCommand:
    def test_config_file_writes_corpus(self, tmp_path):
        cfg = tmp_path / "synth.json"
        cfg.write_text(json.dumps({
            "n_samples": 40, "n_classes": 2, "nodes": 8,
            "features_per_layer": [10, 5, 6], "seed": 1,
        }), encoding="utf-8")
        out = tmp_path / "data"
        assert main(["synth", "--config", str(cfg), "--out", str(out)]) == 0
        for name in ("mrna.csv", "mirna.csv", "methylation.csv", "labels.csv",
                     "edges.tsv", "feature_map.tsv", "nodes.txt",
                     "manifest.json"):
            assert (out / name).exists()

    def test_missing_config_path_exits_2(self, tmp_path):
        code = main(["synth", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")])
        assert code == 2

    def test_rerun_same_seed_identical_files(self, tmp_path):
        for out in ("a", "b"):
            assert main(["synth", "--preset", "complementary", "--seed", "4",
                         "--out", str(tmp_path / out)]) == 0
        for name in ("mrna.csv", "labels.csv", "edges.tsv", "manifest.json"):
            assert ((tmp_path / "a" / name).read_bytes()
                    == (tmp_path / "b" / name).read_bytes())

    def test_config_and_preset_together_rejected(self, tmp_path):
        cfg = tmp_path / "synth.json"
        cfg.write_text("{}", encoding="utf-8")
        assert main(["synth", "--config", str(cfg), "--preset", "complementary",
                     "--out", str(tmp_path / "o")]) == 2


class TestSelectCommand:
    def test_monotone_stage_counts(self, tmp_path, capsys):
        paths = small_corpus(tmp_path / "data", seed=2)
        out = tmp_path / "sel"
        # first pass with a tiny lambda just to learn lambda_max
        assert main(["select", "--matrix", str(paths["mrna"]),
                     "--labels", str(paths["labels"]), "--mode", "mrna",
                     "--lambda", "0.001", "--threshold", "0.01",
                     "--out", str(out)]) == 0
        first = json.loads((out / "selection_report.json").read_text())
        lam = 0.4 * first["lambda_max"]
        assert main(["select", "--matrix", str(paths["mrna"]),
                     "--labels", str(paths["labels"]), "--mode", "mrna",
                     "--lambda", str(lam), "--threshold", "0.01",
                     "--out", str(out)]) == 0
        report = json.loads((out / "selection_report.json").read_text())
        stages = report["stages"]
        assert (stages["initial_features"] >= stages["after_moderated_t"]
                >= stages["after_lasso"] >= 1)
        selected = (out / "selected_features.txt").read_text().split()
        assert len(selected) == stages["after_lasso"]
        assert all(fid.startswith("mrna_") for fid in selected)

    def test_lambda_at_boundary_exits_3(self, tmp_path):
        paths = small_corpus(tmp_path / "data", seed=3)
        out = tmp_path / "sel"
        assert main(["select", "--matrix", str(paths["mrna"]),
                     "--labels", str(paths["labels"]), "--mode", "mrna",
                     "--lambda", "0.001", "--threshold", "0.05",
                     "--out", str(out)]) == 0
        report = json.loads((out / "selection_report.json").read_text())
        code = main(["select", "--matrix", str(paths["mrna"]),
                     "--labels", str(paths["labels"]), "--mode", "mrna",
                     "--lambda", str(report["lambda_max"] * 1.01),
                     "--threshold", "0.05", "--out", str(out)])
        assert code == 3

    def test_invalid_mode_exits_2(self, tmp_path):
        assert main(["select", "--matrix", "x", "--labels", "y",
                     "--mode", "protein", "--lambda", "1", "--out", "z"]) == 2

    def test_impossible_threshold_exits_3(self, tmp_path):
        paths = small_corpus(tmp_path / "data", seed=5)
        code = main(["select", "--matrix", str(paths["mrna"]),
                     "--labels", str(paths["labels"]), "--mode", "mrna",
                     "--lambda", "1.0", "--threshold", "1e-300",
                     "--out", str(tmp_path / "sel")])
        assert code == 3


class TestTrainCommand:
    def test_report_schema_and_checkpoints(self, tmp_path, capsys):
        data = tmp_path / "data"
        small_corpus(data, seed=4)
        cfg = write_train_config(tmp_path, data)
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        report = json.loads((out / "cv_report.json").read_text())
        assert set(report) == {"config", "seed", "folds", "mean", "std"}
        assert len(report["folds"]) == 2
        for fold in report["folds"]:
            assert set(fold) == {"accuracy", "precision_macro", "recall_macro",
                                 "f1_macro", "loss_history_len"}
            assert 0.0 <= fold["accuracy"] <= 1.0
        assert (out / "fold_0.checkpoint.json").exists()
        assert (out / "fold_1.checkpoint.json").exists()
        line = capsys.readouterr().out.strip().splitlines()[-1]
        assert line.startswith("accuracy ") and "%" in line and "±" in line

    def test_byte_identical_reports_same_seed(self, tmp_path):
        data = tmp_path / "data"
        small_corpus(data, seed=6)
        cfg = write_train_config(tmp_path, data)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["train", "--config", str(cfg), "--out", str(a)]) == 0
        assert main(["train", "--config", str(cfg), "--out", str(b)]) == 0
        assert ((a / "cv_report.json").read_bytes()
                == (b / "cv_report.json").read_bytes())
        assert ((a / "fold_0.checkpoint.json").read_bytes()
                == (b / "fold_0.checkpoint.json").read_bytes())

    def test_parallel_folds_same_bytes(self, tmp_path):
        data = tmp_path / "data"
        small_corpus(data, seed=7)
        cfg = write_train_config(tmp_path, data)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["train", "--config", str(cfg), "--out", str(a)]) == 0
        assert main(["train", "--config", str(cfg), "--out", str(b),
                     "--parallel-folds"]) == 0
        assert ((a / "cv_report.json").read_bytes()
                == (b / "cv_report.json").read_bytes())

    def test_too_few_samples_per_class_exits_4(self, tmp_path):
        data = tmp_path / "data"
        small_corpus(data, seed=8, n_samples=16)  # 4 per class
        cfg = write_train_config(tmp_path, data,
                                 train={"epochs": 1, "k_folds": 5})
        code = main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 4

    def test_missing_config_key_exits_2(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"layers": []}), encoding="utf-8")
        assert main(["train", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2

    def test_selected_feature_lists_respected(self, tmp_path):
        data = tmp_path / "data"
        paths = small_corpus(data, seed=9)
        keep = tmp_path / "keep.txt"
        with open(paths["mrna"], encoding="utf-8") as fh:
            header = fh.readline()
            ids = [line.split(",")[0] for line in fh]
        keep.write_text("\n".join(ids[:5]) + "\n", encoding="utf-8")
        cfg = write_train_config(
            tmp_path, data,
            layers=[{"name": "mrna", "path": str(data / "mrna.csv"),
                     "log2": True, "features": str(keep)}])
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        report = json.loads((out / "cv_report.json").read_text())
        assert len(report["folds"]) == 2


class TestGradcheckCommand:
    def test_default_passes_with_location_report(self, capsys):
        assert main(["gradcheck", "--seed", "0"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out
        assert "max relative error" in out
        assert "worst at" in out

    def test_unreachable_tolerance_fails(self, capsys):
        assert main(["gradcheck", "--seed", "0", "--tolerance", "1e-12"]) == 1
        assert "FAIL" in capsys.readouterr().out


class TestEvalCommand:
    def test_metrics_output(self, tmp_path, capsys):
        (tmp_path / "pred.txt").write_text("a\nb\nb\nc\n", encoding="utf-8")
        (tmp_path / "true.txt").write_text("a\na\nb\nc\n", encoding="utf-8")
        assert main(["eval", "--pred", str(tmp_path / "pred.txt"),
                     "--true", str(tmp_path / "true.txt")]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["accuracy_percent"] == 75.0
        assert payload["n_samples"] == 4

    def test_length_mismatch_exits_2(self, tmp_path):
        (tmp_path / "pred.txt").write_text("a\n", encoding="utf-8")
        (tmp_path / "true.txt").write_text("a\nb\n", encoding="utf-8")
        assert main(["eval", "--pred", str(tmp_path / "pred.txt"),
                     "--true", str(tmp_path / "true.txt")]) == 2


class TestArgumentErrors:
    def test_no_subcommand_exits_2(self):
        assert main([]) == 2

    def test_unknown_subcommand_exits_2(self):
        assert main(["frobnicate"]) == 2


class TestAppendUnmappedMode:
    def test_train_with_appended_unmapped_features(self, tmp_path):
        data = tmp_path / "data"
        small_corpus(data, seed=10)
        cfg = write_train_config(tmp_path, data, append_unmapped=True)
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        report = json.loads((out / "cv_report.json").read_text())
        assert len(report["folds"]) == 2
        checkpoint = json.loads((out / "fold_0.checkpoint.json").read_text())
        assert checkpoint["extra_dim"] > 0


class TestConfigKeyErrors:
    def test_unknown_synth_config_key_exits_2(self, tmp_path):
        cfg = tmp_path / "synth.json"
        cfg.write_text(json.dumps({"n_samples": 20, "n_classes": 2, "nodes": 6,
                                   "bogus_knob": 1}), encoding="utf-8")
        assert main(["synth", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2

    def test_unknown_train_option_exits_2(self, tmp_path):
        data = tmp_path / "data"
        small_corpus(data, seed=12, n_samples=24, n_classes=2)
        cfg = write_train_config(tmp_path, data,
                                 train={"epochs": 1, "k_folds": 2,
                                        "not_a_field": True})
        assert main(["train", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2
