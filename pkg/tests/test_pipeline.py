import json

import numpy as np
import pytest

from shotpose.cli import main
from shotpose.errors import MissingArtifactError, ValidationError
from shotpose.pipeline import (
    RunConfig, load_run_config, read_csv, require_artifact,
)
from shotpose.synthetic import generate_dataset


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    """A small synthetic dataset plus a fast pipeline config."""
    root = tmp_path_factory.mktemp("demo")
    data = root / "data"
    generate_dataset(data, clips=8, seed=11)
    cfg = {
        "dataset_root": str(data),
        "out_dir": str(root / "run"),
        "seed": 5,
        "k": 2,
        "perplexity": 2.0,
        "tsne_iters": 260,
        "gcn_hidden": 8,
        "gcn_out": 4,
        "lstm_hidden": 16,
        "learning_rate": 0.005,
        "epochs": 6,
    }
    cfg_path = root / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    return {"root": root, "data": data, "cfg": cfg, "cfg_path": cfg_path}


def run_cli(*args) -> int:
    return main([str(a) for a in args])


def test_config_loading_and_validation(demo, tmp_path):
    cfg = load_run_config(demo["cfg_path"])
    assert cfg.k == 2
    assert cfg.model_seed == 5 and cfg.kmeans_seed == 106 and cfg.tsne_seed == 207
    override = load_run_config(demo["cfg_path"], k=4, seed=9)
    assert override.k == 4 and override.seed == 9
    # Hash covers analysis knobs, not paths.
    moved = load_run_config(demo["cfg_path"], out_dir=str(tmp_path / "elsewhere"))
    assert moved.config_hash == cfg.config_hash
    assert override.config_hash != cfg.config_hash

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"out_dir": "x", "nope": 1}))
    with pytest.raises(ValidationError):
        load_run_config(bad)
    with pytest.raises(Exception):
        load_run_config(None)  # no out_dir anywhere


def test_cluster_before_embed_is_dependency_error(demo, tmp_path, capsys):
    code = run_cli("cluster", "--config", demo["cfg_path"], "--out", tmp_path / "fresh")
    assert code == 1
    err = capsys.readouterr().err
    assert "embed" in err and "latents" in err


def test_validate_exit_codes(demo, tmp_path, capsys):
    assert run_cli("validate", "--config", demo["cfg_path"]) == 0
    out = capsys.readouterr().out
    assert out.count("pass") == 8

    broken_root = tmp_path / "broken_data"
    generate_dataset(broken_root, clips=3, seed=1)
    clip_dir = sorted(p for p in broken_root.iterdir() if p.is_dir())[0]
    doc = json.loads((clip_dir / "clip.json").read_text())
    doc["shooter_track_id"] = 999
    (clip_dir / "clip.json").write_text(json.dumps(doc))
    code = run_cli("validate", "--config", demo["cfg_path"],
                   "--dataset", broken_root, "--out", tmp_path / "vrun")
    assert code == 1
    out = capsys.readouterr().out
    assert "FAIL" in out and "2/3 clips valid" in out
    _meta, _header, rows = read_csv(tmp_path / "vrun" / "validation.csv")
    assert len(rows) == 3


def test_full_pipeline_and_report(demo):
    for cmd in ("train", "embed", "cluster", "stats", "tsne", "report"):
        assert run_cli(cmd, "--config", demo["cfg_path"]) == 0, cmd

    run_dir = demo["root"] / "run"
    report = run_dir / "report"
    expected = {"cluster_assignments.csv", "tsne_coords.csv", "shot_stats.csv",
                "cluster_summary.csv", "cluster_scatter.svg", "manifest.json"}
    assert {p.name for p in report.iterdir()} == expected

    manifest = json.loads((report / "manifest.json").read_text())
    cfg = load_run_config(demo["cfg_path"])
    assert manifest["config_hash"] == cfg.config_hash
    assert manifest["seeds"] == cfg.seeds_dict()

    svg = (report / "cluster_scatter.svg").read_text()
    assert svg.lstrip().startswith("<?xml")
    assert f"config_hash={cfg.config_hash}" in svg

    # Every CSV artifact embeds the config hash and its stage seed.
    for csv_path in run_dir.glob("*.csv"):
        meta, _header, _rows = read_csv(csv_path)
        assert meta["config_hash"] == cfg.config_hash, csv_path
        assert "seed" in meta


def test_artifact_headers_and_latents_shape(demo):
    run_dir = demo["root"] / "run"
    meta, header, rows = read_csv(run_dir / "latents.csv")
    assert header[0] == "clip_id"
    assert len(header) == 1 + 16
    assert len(rows) == 8
    doc = json.loads((run_dir / "latents.json").read_text())
    assert doc["latent_dim"] == 16
    assert len(doc["clips"]) == 8


def test_stage_rerun_is_idempotent(demo):
    run_dir = demo["root"] / "run"
    before = (run_dir / "clusters.csv").read_bytes()
    assert run_cli("cluster", "--config", demo["cfg_path"]) == 0
    assert (run_dir / "clusters.csv").read_bytes() == before


def test_cluster_k_scan_written(demo):
    run_dir = demo["root"] / "run"
    _meta, header, rows = read_csv(run_dir / "cluster_k_scan.csv")
    assert header == ["k", "inertia"]
    inertias = [float(r[1]) for r in rows]
    assert len(inertias) >= 4
    assert all(b <= a + 1e-9 for a, b in zip(inertias, inertias[1:]))


def test_stats_requires_clusters(demo, tmp_path, capsys):
    code = run_cli("stats", "--config", demo["cfg_path"], "--out", tmp_path / "norun")
    assert code == 1
    assert "cluster" in capsys.readouterr().err


def test_require_artifact_error_names_producer(demo, tmp_path):
    cfg = RunConfig(out_dir=str(tmp_path / "empty_run"))
    with pytest.raises(MissingArtifactError) as exc:
        require_artifact(cfg, "latents.json")
    assert exc.value.producer == "embed"


# -- evaluation commands ------------------------------------------------------


@pytest.fixture()
def eval_files(tmp_path):
    rng = np.random.default_rng(3)
    gt_poses = []
    pred_poses = []
    for i in range(4):
        joints = rng.uniform(10, 90, size=(17, 2))
        joints[11] = [60, 30]; joints[14] = [40, 30]
        joints[4] = [55, 60]; joints[1] = [45, 60]
        gt_poses.append({"id": f"p{i}",
                         "joints": [[float(x), float(y), 1] for x, y in joints]})
        noisy = joints + rng.normal(scale=2.0, size=(17, 2))
        pred_poses.append({"id": f"p{i}",
                           "joints": [[float(x), float(y)] for x, y in noisy]})
    (tmp_path / "gt_poses.json").write_text(json.dumps({"poses": gt_poses}))
    (tmp_path / "pred_poses.json").write_text(json.dumps({"poses": pred_poses}))

    gt_frames = [{"frame_index": t,
                  "boxes": [{"x": 10.0 * j, "y": 5.0, "w": 8.0, "h": 18.0}
                            for j in range(2)]}
                 for t in range(3)]
    pred_frames = [{"frame_index": t,
                    "boxes": [{"x": 10.0 * j + 1.0, "y": 5.5, "w": 8.0, "h": 18.0,
                               "confidence": 0.9 - 0.1 * j}
                              for j in range(2)]}
                   for t in range(3)]
    (tmp_path / "gt_det.json").write_text(json.dumps({"frames": gt_frames}))
    (tmp_path / "pred_det.json").write_text(json.dumps({"frames": pred_frames}))

    tracklets = [{"track_id": i + 1,
                  "boxes": [{"frame_index": t, "x": 20.0 * i, "y": 4.0,
                             "w": 7.0, "h": 15.0} for t in range(4)]}
                 for i in range(2)]
    (tmp_path / "gt_tracks.json").write_text(json.dumps({"tracklets": tracklets}))
    (tmp_path / "pred_tracks.json").write_text(json.dumps({"tracklets": tracklets}))

    clips = [{"clip_id": f"c{i}",
              "tracklets": [{"track_id": 1, "score": 0.9, "is_shooter": True},
                            {"track_id": 2, "score": 0.2, "is_shooter": False}]}
             for i in range(5)]
    (tmp_path / "scores.json").write_text(json.dumps({"clips": clips}))
    return tmp_path


def test_eval_commands_and_report_tables(eval_files):
    out = eval_files / "run"
    assert run_cli("eval-pose", "--out", out,
                   "--gt", eval_files / "gt_poses.json",
                   "--pred", eval_files / "pred_poses.json") == 0
    assert run_cli("eval-detect", "--out", out,
                   "--gt", eval_files / "gt_det.json",
                   "--pred", eval_files / "pred_det.json") == 0
    assert run_cli("eval-track", "--out", out,
                   "--gt", eval_files / "gt_tracks.json",
                   "--pred", eval_files / "pred_tracks.json") == 0
    assert run_cli("eval-select", "--out", out,
                   "--scores", eval_files / "scores.json") == 0

    pose = json.loads((out / "eval_pose.json").read_text())
    assert set(pose["groups"]) == {"Head", "Shoulder", "Elbow", "Wrist",
                                   "Body", "Hip", "Knee", "Ankle"}
    assert 0.0 <= pose["auc"] <= 1.0

    detect = json.loads((out / "eval_detect.json").read_text())
    assert detect["precision"] == 1.0 and detect["recall"] == 1.0

    track = json.loads((out / "eval_track.json").read_text())
    assert track["hota"] == pytest.approx(1.0)
    assert len(track["hota_curve"]) == 19

    select = json.loads((out / "eval_select.json").read_text())
    assert select["clip_accuracy"] == 1.0


def test_report_includes_metric_tables_when_present(demo, eval_files):
    out = demo["root"] / "run"
    assert run_cli("eval-select", "--config", demo["cfg_path"],
                   "--scores", eval_files / "scores.json") == 0
    assert run_cli("report", "--config", demo["cfg_path"]) == 0
    table = out / "report" / "selection_metrics.csv"
    assert table.exists()
    _meta, header, rows = read_csv(table)
    assert header == ["precision", "recall", "accuracy", "clip_accuracy"]
    assert float(rows[0][3]) == 1.0


def test_eval_pose_mismatched_ids(eval_files, capsys):
    (eval_files / "short.json").write_text(json.dumps(
        {"poses": [{"id": "only", "joints": [[0, 0, 1]] * 17}]}))
    code = run_cli("eval-pose", "--out", eval_files / "run2",
                   "--gt", eval_files / "gt_poses.json",
                   "--pred", eval_files / "short.json")
    assert code == 1
    assert "ids do not match" in capsys.readouterr().err
