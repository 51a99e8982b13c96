import json
import os

import pytest

from hoil.controllers.cli import main

SMALL_RUN = {
    "seed": 1,
    "model": {
        "channels": [8, 16],
        "projection_dim": 8,
        "patch_size": 16,
        "heatmap_bins": 16,
        "heatmap_half_extent": 1.0,
        "grid": {"base_grid_size": 0.1},
    },
    "hoicl": {"sample_cap": 16},
    "optimizer": {"batch_size": 2, "epochs": 1},
    "filters": {"sg_window": 5},
    "ctrefine": {"hidden": 8, "max_frames": 16, "steps": 3},
    "sim": {
        "azimuth_min_deg": -10.0,
        "azimuth_max_deg": 10.0,
        "azimuth_step_deg": 0.5,
        "elevation_min_deg": -15.0,
        "elevation_max_deg": 3.0,
        "elevation_step_deg": 0.5,
        "max_points": 96,
        "object_dropout": 0.0,
    },
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A simulated sequence plus pretrained and fine-tuned checkpoints."""
    root = tmp_path_factory.mktemp("cli")
    config_path = str(root / "run.json")
    with open(config_path, "w") as f:
        json.dump(SMALL_RUN, f)
    data = str(root / "seq")
    assert main(["simulate", "--config", config_path, "--frames", "6", "--out", data, "--workers", "2"]) == 0
    pretrained = str(root / "pre.ckpt")
    assert main(["pretrain", "--config", config_path, "--data", data, "--out", pretrained, "--steps", "2"]) == 0
    finetuned = str(root / "fine.ckpt")
    assert main(["finetune", "--config", config_path, "--data", data, "--out", finetuned, "--ckpt", pretrained,
                 "--reinit-queries", "--steps", "2"]) == 0
    return {"root": root, "config": config_path, "data": data, "pretrained": pretrained, "finetuned": finetuned}


def test_simulate_is_deterministic(workspace, tmp_path):
    again = str(tmp_path / "again")
    assert main(["simulate", "--config", workspace["config"], "--frames", "6", "--out", again, "--workers", "1"]) == 0
    with open(os.path.join(workspace["data"], "sequence.bin"), "rb") as f:
        first = f.read()
    with open(os.path.join(again, "sequence.bin"), "rb") as f:
        assert f.read() == first
    manifest = json.loads((tmp_path / "again" / "manifest.json").read_text())
    assert manifest["frame_count"] == 6 and manifest["profile"] == "SMPL15_OBJ"


def test_simulate_rejects_zero_frames(tmp_path):
    assert main(["simulate", "--frames", "0", "--out", str(tmp_path / "none")]) == 1


def test_unknown_config_key_is_a_config_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"sead": 3}))
    assert main(["simulate", "--config", str(path), "--frames", "1", "--out", str(tmp_path / "x")]) == 1


def test_training_writes_sidecars(workspace):
    for ckpt, mode in ((workspace["pretrained"], "pretrain"), (workspace["finetuned"], "finetune")):
        meta = json.loads(open(ckpt + ".json").read())
        assert meta["mode"] == mode and meta["step"] == 2
        rows = open(ckpt + ".loss.csv").read().splitlines()
        assert len(rows) == 3 and rows[0].startswith("step,total,")
    assert json.loads(open(workspace["finetuned"] + ".json").read())["profile"] == "SMPL15"


def test_finetune_needs_reinit_on_query_mismatch(workspace, tmp_path):
    code = main(["finetune", "--config", workspace["config"], "--data", workspace["data"],
                 "--out", str(tmp_path / "f.ckpt"), "--ckpt", workspace["pretrained"], "--steps", "1"])
    assert code == 1
    assert not (tmp_path / "f.ckpt").exists()


def test_finetune_without_checkpoint_is_rejected(workspace, tmp_path):
    code = main(["finetune", "--config", workspace["config"], "--data", workspace["data"],
                 "--out", str(tmp_path / "f.ckpt")])
    assert code == 1


def test_eval_writes_reports(workspace, tmp_path):
    report = str(tmp_path / "eval.csv")
    assert main(["eval", "--ckpt", workspace["finetuned"], "--data", workspace["data"], "--report", report]) == 0
    lines = open(report).read().splitlines()
    assert lines[0] == "metric,value" and lines[1].startswith("mpjpe_mm,")
    joints = open(str(tmp_path / "eval_per_joint.csv")).read().splitlines()
    assert len(joints) == 1 + 15


def test_eval_with_missing_checkpoint(workspace, tmp_path):
    code = main(["eval", "--ckpt", str(tmp_path / "absent.ckpt"), "--data", workspace["data"],
                 "--report", str(tmp_path / "r.csv")])
    assert code == 2


def test_refine_none_matches_eval(workspace, tmp_path):
    eval_report = str(tmp_path / "eval.csv")
    refine_report = str(tmp_path / "none.csv")
    assert main(["eval", "--ckpt", workspace["finetuned"], "--data", workspace["data"], "--report", eval_report]) == 0
    assert main(["refine", "--method", "none", "--ckpt", workspace["finetuned"], "--data", workspace["data"],
                 "--report", refine_report]) == 0
    assert open(eval_report).read() == open(refine_report).read()


def test_refine_all_compares_methods(workspace, tmp_path):
    report = str(tmp_path / "compare.csv")
    assert main(["refine", "--method", "all", "--ckpt", workspace["finetuned"], "--data", workspace["data"],
                 "--report", report]) == 0
    lines = open(report).read().splitlines()
    assert lines[0] == "method,mpjpe_mm,pck3,pck5"
    assert [line.split(",")[0] for line in lines[1:]] == ["none", "gaussian", "sg", "oneeuro"]


def test_refine_with_trained_ctrefine(workspace, tmp_path):
    refiner = str(tmp_path / "refiner.ckpt")
    assert main(["ctrefine-train", "--config", workspace["config"], "--out", refiner, "--samples", "2",
                 "--frames", "8"]) == 0
    assert json.loads(open(refiner + ".json").read())["ctrefine"]["hidden"] == 8
    report = str(tmp_path / "ct.csv")
    assert main(["refine", "--method", "ctrefine", "--ckpt", workspace["finetuned"], "--data", workspace["data"],
                 "--report", report, "--refiner", refiner]) == 0
    assert main(["refine", "--method", "ctrefine", "--ckpt", workspace["finetuned"], "--data", workspace["data"],
                 "--report", report]) == 1


def test_ctrefine_train_rejects_long_sequences(workspace, tmp_path):
    assert main(["ctrefine-train", "--config", workspace["config"], "--out", str(tmp_path / "r.ckpt"),
                 "--frames", "64"]) == 1


def test_export_scene(tmp_path):
    out = tmp_path / "scene"
    assert main(["export-scene", "--out", str(out)]) == 0
    for name in ("human.obj", "object.obj", "keypoints.json"):
        assert (out / name).exists()
    keypoints = json.loads((out / "keypoints.json").read_text())
    assert keypoints["profile"] == "SMPL15_OBJ" and len(keypoints["keypoints"]) == 16
    bare = tmp_path / "bare"
    assert main(["export-scene", "--out", str(bare), "--no-object", "--pose", "gait"]) == 0
    assert not (bare / "object.obj").exists()
    assert json.loads((bare / "keypoints.json").read_text())["keypoints"][-1]["valid"] is False


def test_bad_arguments_exit_nonzero():
    assert main(["refine", "--method", "median", "--ckpt", "a", "--data", "b", "--report", "c"]) == 2
    assert main([]) == 2
