import json
import os

import pytest

from glimpsenet.cli import main
from glimpsenet.evaluation import load_curve_csv
from glimpsenet.features import load_features
from glimpsenet.nnet import load_checkpoint


def write_config(path, **overrides):
    doc = {
        "glimpse": {"peripheral_count": 2},
        "extractor": {"grid": 6},
        "train": {"epochs": 8, "batch_size": 8, "hidden": 6,
                  "variant": "concat", "seed": 13, "lr0": 0.05,
                  "decay": 0.97},
    }
    doc.update(overrides)
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One small end-to-end run shared by the read-only CLI assertions."""
    root = tmp_path_factory.mktemp("pipeline")
    data = root / "data"
    config = write_config(root / "config.json")
    assert main(["synth", "--out", str(data), "--images", "6",
                 "--seed", "21", "--humans", "1..2", "--clutter", "2"]) == 0
    props = root / "props.jsonl"
    assert main(["propose", "--data", str(data), "--config", config,
                 "--out", str(props)]) == 0
    feats = root / "feats.bin"
    assert main(["extract", "--data", str(data), "--proposals", str(props),
                 "--config", config, "--out", str(feats)]) == 0
    model = root / "model.ckpt"
    assert main(["train", "--features", str(feats), "--config", config,
                 "--out", str(model)]) == 0
    curve = root / "curve.csv"
    svg = root / "curve.svg"
    assert main(["eval", "--model", str(model), "--features", str(feats),
                 "--proposals", str(props), "--truth",
                 str(data / "truth.jsonl"), "--out-curve", str(curve),
                 "--svg", str(svg)]) == 0
    return {"root": root, "data": data, "config": config, "props": props,
            "feats": feats, "model": model, "curve": curve, "svg": svg}


class TestEndToEnd:
    def test_artifacts_exist(self, pipeline):
        assert (pipeline["data"] / "manifest.json").exists()
        assert pipeline["props"].exists()
        assert pipeline["feats"].exists()
        assert pipeline["model"].exists()
        assert pipeline["curve"].exists()
        assert pipeline["svg"].read_text().startswith("<svg")
        assert (pipeline["root"] / "model.ckpt.log.csv").exists()

    def test_features_match_glimpse_config(self, pipeline):
        records = load_features(pipeline["feats"])
        assert records[0].steps == 5  # peripheral_count 2 + 3
        assert records[0].dim == 36
        assert all(r.label in (0, 1) for r in records)

    def test_checkpoint_loads(self, pipeline):
        params, steps = load_checkpoint(pipeline["model"])
        assert steps == 5

    def test_curve_parses(self, pipeline):
        curve = load_curve_csv(pipeline["curve"])
        assert len(curve.points) >= 1

    def test_propose_summary_format(self, pipeline, capsys):
        assert main(["propose", "--data", str(pipeline["data"]),
                     "--config", pipeline["config"],
                     "--out", str(pipeline["root"] / "props2.jsonl")]) == 0
        out = capsys.readouterr().out
        assert "images=6" in out
        assert "proposals_per_image_mean=" in out
        recall = float(out.split("recall=")[1].split()[0])
        assert 0.0 <= recall <= 1.0

    def test_eval_prints_parseable_lamr(self, pipeline, capsys):
        assert main(["eval", "--model", str(pipeline["model"]),
                     "--features", str(pipeline["feats"]),
                     "--proposals", str(pipeline["props"]),
                     "--truth", str(pipeline["data"] / "truth.jsonl"),
                     "--out-curve",
                     str(pipeline["root"] / "curve2.csv")]) == 0
        out = capsys.readouterr().out
        lamr = float(out.split("LAMR=")[1].split()[0])
        assert 0.0 <= lamr <= 1.0


class TestExitCodes:
    def test_zero_images_is_usage_error(self, tmp_path, capsys):
        code = main(["synth", "--out", str(tmp_path / "d"), "--images", "0"])
        assert code == 2
        err = capsys.readouterr().err.strip().splitlines()[-1]
        assert json.loads(err)["level"] == "error"

    def test_bad_humans_range(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path / "d"), "--images", "1",
                     "--humans", "3..1"]) == 2

    def test_unknown_flag(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path / "d"), "--images", "1",
                     "--wat", "1"]) == 2

    def test_unwritable_out_is_io_error(self, tmp_path):
        # a path through a regular file cannot be created, even by root
        plug = tmp_path / "plug"
        plug.write_text("occupied")
        code = main(["synth", "--out", str(plug / "sub"), "--images", "1"])
        assert code == 3

    def test_missing_data_dir_is_usage(self, tmp_path):
        assert main(["propose", "--data", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "p.jsonl")]) == 2

    def test_missing_intrinsics_is_usage(self, tmp_path):
        data = tmp_path / "data"
        assert main(["synth", "--out", str(data), "--images", "1",
                     "--humans", "1..1", "--clutter", "0"]) == 0
        (data / "intrinsics.json").unlink()
        assert main(["propose", "--data", str(data),
                     "--out", str(tmp_path / "p.jsonl")]) == 2

    def test_corrupt_features_is_format_error(self, tmp_path, pipeline):
        bad = tmp_path / "bad.bin"
        blob = bytearray(pipeline["feats"].read_bytes())
        blob[:4] = b"NOPE"
        bad.write_bytes(bytes(blob))
        assert main(["train", "--features", str(bad),
                     "--config", pipeline["config"],
                     "--out", str(tmp_path / "m.ckpt")]) == 4

    def test_steps_mismatch_is_format_error(self, tmp_path, pipeline):
        config = write_config(tmp_path / "other.json",
                              glimpse={"peripheral_count": 6})
        assert main(["train", "--features", str(pipeline["feats"]),
                     "--config", config,
                     "--out", str(tmp_path / "m.ckpt")]) == 4


class TestDeterminism:
    def test_synth_idempotent(self, tmp_path):
        args_a = ["synth", "--out", str(tmp_path / "a"), "--images", "2",
                  "--seed", "5", "--humans", "1..1", "--clutter", "1"]
        args_b = ["synth", "--out", str(tmp_path / "b"), "--images", "2",
                  "--seed", "5", "--humans", "1..1", "--clutter", "1"]
        assert main(args_a) == 0
        assert main(args_b) == 0
        a = json.loads((tmp_path / "a" / "manifest.json").read_text())
        b = json.loads((tmp_path / "b" / "manifest.json").read_text())
        assert a == b
        for entry in a["images"]:
            assert (tmp_path / "a" / entry["depth"]).read_bytes() == \
                (tmp_path / "b" / entry["depth"]).read_bytes()

    def test_proposals_idempotent(self, pipeline, tmp_path):
        out = tmp_path / "again.jsonl"
        assert main(["propose", "--data", str(pipeline["data"]),
                     "--config", pipeline["config"],
                     "--out", str(out)]) == 0
        assert out.read_bytes() == pipeline["props"].read_bytes()

    def test_train_idempotent(self, pipeline, tmp_path):
        out = tmp_path / "model2.ckpt"
        assert main(["train", "--features", str(pipeline["feats"]),
                     "--config", pipeline["config"],
                     "--out", str(out)]) == 0
        assert out.read_bytes() == pipeline["model"].read_bytes()
