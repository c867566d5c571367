"""Tests for the command-line interface"""

import json

import numpy as np
import pandas as pd
import pytest

from src.main import main

TRAIN_OVERRIDES = {"hidden_sizes": [4, 4, 2], "batch_size": 64, "lr0": 0.005, "max_epochs": 3}


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "synth"
    code = main(
        ["synth", "--models", "12", "--items", "60", "--dims", "3", "--max-abilities", "2",
         "--seed", "5", "--out", str(out)]
    )
    assert code == 0
    return out


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "train.json"
    path.write_text(json.dumps(TRAIN_OVERRIDES), encoding="utf-8")
    return path


def write_plan(tmp_path, name, **fields):
    plan = {
        "repeats": 2,
        "source": {"name": "synth", "responses": "synth/responses.csv", "qmatrix": "synth/qmatrix.csv"},
        "train": TRAIN_OVERRIDES,
        **fields,
    }
    path = tmp_path / name
    path.write_text(json.dumps(plan), encoding="utf-8")
    return path


def dataset_args(synth_dir):
    return ["--responses", str(synth_dir / "responses.csv"), "--qmatrix", str(synth_dir / "qmatrix.csv")]


class TestSynth:
    def test_writes_three_files(self, synth_dir):
        assert {p.name for p in synth_dir.iterdir()} == {"responses.csv", "qmatrix.csv", "abilities.csv"}
        responses = pd.read_csv(synth_dir / "responses.csv")
        assert responses.shape == (12, 61)
        assert responses.columns[0] == "model_id"

    def test_same_seed_same_bytes(self, synth_dir, tmp_path):
        again = tmp_path / "again"
        main(["synth", "--models", "12", "--items", "60", "--dims", "3", "--max-abilities", "2",
              "--seed", "5", "--out", str(again)])
        for name in ("responses.csv", "qmatrix.csv", "abilities.csv"):
            assert (again / name).read_bytes() == (synth_dir / name).read_bytes()

    def test_template(self, tmp_path):
        out = tmp_path / "tpl"
        assert main(["synth", "--template", "math500", "--models", "5", "--out", str(out)]) == 0
        q = pd.read_csv(out / "qmatrix.csv", index_col=0)
        assert q.shape == (500, 35)
        assert q["ability_27"].sum() == 330

    def test_invalid_spec(self, tmp_path, capsys):
        code = main(["synth", "--dims", "3", "--max-abilities", "5", "--out", str(tmp_path / "x")])
        assert code == 2
        assert "Error:" in capsys.readouterr().out


class TestValidateAndCoverage:
    def test_validate(self, synth_dir, capsys):
        assert main(["validate", *dataset_args(synth_dir), "--taxonomy", "math"]) == 0
        out = capsys.readouterr().out
        assert "12 models × 60 items × 3 abilities" in out
        assert "✓ Valid" in out

    def test_missing_file(self, synth_dir, tmp_path, capsys):
        code = main(
            ["validate", "--responses", str(tmp_path / "nope.csv"), "--qmatrix", str(synth_dir / "qmatrix.csv")]
        )
        assert code == 2
        assert "nope.csv" in capsys.readouterr().out

    def test_bad_cell(self, synth_dir, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        lines = (synth_dir / "responses.csv").read_text(encoding="utf-8").splitlines()
        head, *cells = lines[2].split(",")
        cells[0] = "2"
        lines[2] = ",".join([head, *cells])
        bad.write_text("\n".join(lines) + "\n", encoding="utf-8")
        code = main(["validate", "--responses", str(bad), "--qmatrix", str(synth_dir / "qmatrix.csv")])
        assert code == 2
        assert "line 3" in capsys.readouterr().out

    def test_taxonomy_missing_ability(self, synth_dir, tmp_path, capsys):
        taxonomy = tmp_path / "toy.json"
        taxonomy.write_text(
            json.dumps({"knowledge": {"ability_0": {"name": "K"}}, "cognitive": {"c0": {"name": "C"}}}),
            encoding="utf-8",
        )
        code = main(["validate", *dataset_args(synth_dir), "--taxonomy", str(taxonomy)])
        assert code == 2
        assert "ability_1" in capsys.readouterr().out

    def test_coverage_csv(self, synth_dir, tmp_path):
        out = tmp_path / "coverage.csv"
        assert main(["coverage", "--qmatrix", str(synth_dir / "qmatrix.csv"), "--out", str(out)]) == 0
        df = pd.read_csv(out)
        assert list(df.columns) == ["ability_id", "count", "ratio"]
        assert len(df) == 3

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--responses", "r.csv"])
        assert exc.value.code == 1

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            main(["explain"])
        assert exc.value.code == 1


class TestTrainAndPredict:
    def test_train_deterministic(self, synth_dir, config_file, tmp_path):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        for out in (a, b):
            code = main(["train", *dataset_args(synth_dir), "--config", str(config_file), "--out", str(out)])
            assert code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seed_flag_changes_checkpoint(self, synth_dir, config_file, tmp_path):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        main(["train", *dataset_args(synth_dir), "--config", str(config_file), "--out", str(a)])
        main(["train", *dataset_args(synth_dir), "--config", str(config_file), "--seed", "1", "--out", str(b)])
        assert a.read_bytes() != b.read_bytes()

    def test_epoch_log(self, synth_dir, config_file, tmp_path):
        log = tmp_path / "epochs.csv"
        main(["train", *dataset_args(synth_dir), "--config", str(config_file), "--max-epochs", "2",
              "--log", str(log), "--out", str(tmp_path / "m.ckpt")])
        assert len(pd.read_csv(log)) == 2

    def test_bad_config(self, synth_dir, tmp_path):
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"lr0": -1}), encoding="utf-8")
        code = main(["train", *dataset_args(synth_dir), "--config", str(config), "--out", str(tmp_path / "m.ckpt")])
        assert code == 2

    def test_unwritable_output(self, synth_dir, config_file, tmp_path, capsys):
        out = tmp_path / "missing" / "m.ckpt"
        code = main(["train", *dataset_args(synth_dir), "--config", str(config_file), "--out", str(out)])
        assert code == 3
        assert "Error:" in capsys.readouterr().out

    def test_predict_malformed_checkpoint(self, synth_dir, config_file, tmp_path, capsys):
        ckpt = tmp_path / "m.ckpt"
        main(["train", *dataset_args(synth_dir), "--config", str(config_file), "--out", str(ckpt)])
        ckpt.write_bytes(ckpt.read_bytes().replace(b'"name":"bias_0"', b'"name":"bias_X"', 1))
        code = main(["predict", "--checkpoint", str(ckpt), "--qmatrix", str(synth_dir / "qmatrix.csv"),
                     "--out", str(tmp_path / "scores.csv")])
        assert code == 2
        assert "malformed checkpoint header" in capsys.readouterr().out

    def test_predict(self, synth_dir, config_file, tmp_path):
        ckpt = tmp_path / "m.ckpt"
        main(["train", *dataset_args(synth_dir), "--config", str(config_file), "--out", str(ckpt)])
        out, neutral = tmp_path / "scores.csv", tmp_path / "neutral.csv"
        q = str(synth_dir / "qmatrix.csv")
        assert main(["predict", "--checkpoint", str(ckpt), "--qmatrix", q, "--out", str(out)]) == 0
        assert main(["predict", "--checkpoint", str(ckpt), "--qmatrix", q, "--neutral", "--out", str(neutral)]) == 0
        scores = pd.read_csv(out, index_col=0)
        assert scores.shape == (12, 60)
        values = scores.to_numpy()
        assert np.all((values > 0) & (values < 1))
        assert not np.allclose(values, pd.read_csv(neutral, index_col=0).to_numpy())


class TestEvaluate:
    def test_within_plan_reproducible(self, synth_dir, tmp_path):
        plan = write_plan(tmp_path, "within.json", kind="within")
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["evaluate", "--plan", str(plan), "--out", str(a), "--emit-plot-data"]) == 0
        assert main(["evaluate", "--plan", str(plan), "--out", str(b)]) == 0
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        assert (a / "auc_boxplot.csv").is_file()
        assert not (b / "auc_boxplot.csv").exists()

        report = json.loads((a / "report.json").read_text(encoding="utf-8"))
        assert report["heldout_counts"] == [6, 6]
        predictors = [row["predictor"] for row in report["auc_overall"]]
        assert predictors == ["diagnostic", "accuracy", "unidim_irt", "random"]
        assert len(report["validity"]) == 3
        assert {"started_at", "finished_at"} <= set(
            json.loads((a / "run_metadata.json").read_text(encoding="utf-8"))
        )

    def test_cross_same_dataset_is_degenerate(self, synth_dir, tmp_path, capsys):
        target = {"name": "again", "responses": "synth/responses.csv", "qmatrix": "synth/qmatrix.csv"}
        plan = write_plan(tmp_path, "cross.json", kind="cross", target=target, repeats=1)
        assert main(["evaluate", "--plan", str(plan), "--out", str(tmp_path / "out")]) == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text(encoding="utf-8"))
        assert report["run"]["degenerate_pair"] is True
        assert "degenerate pair" in capsys.readouterr().out

    def test_consistency_plan(self, synth_dir, tmp_path):
        target = {"name": "again", "responses": "synth/responses.csv", "qmatrix": "synth/qmatrix.csv"}
        plan = write_plan(tmp_path, "cons.json", kind="consistency", target=target, repeats=1)
        assert main(["evaluate", "--plan", str(plan), "--out", str(tmp_path / "out")]) == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text(encoding="utf-8"))
        assert report["consistency_summary"]["eligible_dimensions"] >= 1
        assert len(report["validity"]) == 6

    def test_checkpoint(self, synth_dir, config_file, tmp_path):
        ckpt = tmp_path / "m.ckpt"
        main(["train", *dataset_args(synth_dir), "--config", str(config_file), "--out", str(ckpt)])
        out = tmp_path / "out"
        assert main(["evaluate", "--checkpoint", str(ckpt), *dataset_args(synth_dir), "--out", str(out)]) == 0
        validity = pd.read_csv(out / "validity.csv")
        assert list(validity.columns) == ["dimension", "benchmark", "n_items", "rho", "p", "class"]
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert len(report["run"]["checkpoint_digest"]) == 64

    def test_needs_exactly_one_source(self, tmp_path):
        assert main(["evaluate", "--out", str(tmp_path / "out")]) == 2

    def test_bad_plan(self, tmp_path, capsys):
        plan = tmp_path / "plan.json"
        plan.write_text(json.dumps({"kind": "within", "repeats": 2, "seeds": [1]}), encoding="utf-8")
        assert main(["evaluate", "--plan", str(plan), "--out", str(tmp_path / "out")]) == 2
        assert "Error:" in capsys.readouterr().out
