"""Pipeline stages gluing the library into reproducible file artifacts.

Every stage reads and writes plain files inside one run directory, so
each step stays independently inspectable and diffable. CSV artifacts
open with a comment line carrying the config hash and the stage seed;
rerunning a stage with the same config and seed reproduces its outputs
byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import kinematics
from .analysis import kmeans_fit, tsne_embed
from .dataset import load_dataset, validate_dataset
from .errors import ContractError, MissingArtifactError, ValidationError
from .joints import get_joint_map
from .metrics import (
    ClipScores, DetectionSet, ScoredBox, TrackSet, TrackletScore,
    detection_pr_ap, hota, pdj_auc, pdj_by_group, pdj_curve, selection_metrics,
)
from .model import (
    AutoencoderConfig, embed_dataset, load_checkpoint, save_checkpoint, train,
)

log = logging.getLogger(__name__)

MODEL_FILE = "model.json"
HISTORY_CSV = "train_history.csv"
LATENTS_JSON = "latents.json"
LATENTS_CSV = "latents.csv"
CLUSTERS_CSV = "clusters.csv"
CENTROIDS_JSON = "centroids.json"
KSCAN_CSV = "cluster_k_scan.csv"
TSNE_CSV = "tsne.csv"
TSNE_KL_CSV = "tsne_kl.csv"
STATS_CSV = "stats.csv"
SUMMARY_CSV = "cluster_summary.csv"
VALIDATION_CSV = "validation.csv"
EVAL_POSE_JSON = "eval_pose.json"
EVAL_DETECT_JSON = "eval_detect.json"
EVAL_TRACK_JSON = "eval_track.json"
EVAL_SELECT_JSON = "eval_select.json"
MANIFEST_JSON = "manifest.json"
REPORT_DIR = "report"

# Which command produces each artifact, for dependency errors.
PRODUCERS = {
    MODEL_FILE: "train",
    LATENTS_JSON: "embed",
    LATENTS_CSV: "embed",
    CLUSTERS_CSV: "cluster",
    CENTROIDS_JSON: "cluster",
    TSNE_CSV: "tsne",
    STATS_CSV: "stats",
    SUMMARY_CSV: "stats",
}


@dataclass
class RunConfig:
    out_dir: str
    dataset_root: str | None = None
    joint_map_id: str = "h36m_17"
    seed: int = 0
    k: int = 3
    perplexity: float = 8.0
    tsne_iters: int = 750
    decision_threshold: float = 0.5
    pdj_threshold: float = 0.5
    iou_threshold: float = 0.5
    vertical_axis: int = 1
    vertical_sign: float = 1.0
    gcn_hidden: int = 32
    gcn_out: int = 16
    lstm_hidden: int = 128
    learning_rate: float = 1e-3
    epochs: int = 300
    batch_size: int | None = None

    # Derived stage seeds, explicit in every manifest.
    @property
    def model_seed(self) -> int:
        return self.seed

    @property
    def kmeans_seed(self) -> int:
        return self.seed + 101

    @property
    def tsne_seed(self) -> int:
        return self.seed + 202

    def model_config(self) -> AutoencoderConfig:
        return AutoencoderConfig(
            gcn_hidden=self.gcn_hidden, gcn_out=self.gcn_out,
            lstm_hidden=self.lstm_hidden, learning_rate=self.learning_rate,
            epochs=self.epochs, batch_size=self.batch_size, seed=self.model_seed)

    def hashable_dict(self) -> dict:
        """Analysis parameters only; file-system paths stay out of the hash."""
        doc = asdict(self)
        doc.pop("out_dir")
        doc.pop("dataset_root")
        return doc

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.hashable_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]

    def seeds_dict(self) -> dict:
        return {"seed": self.seed, "model_seed": self.model_seed,
                "kmeans_seed": self.kmeans_seed, "tsne_seed": self.tsne_seed}

    def require_dataset(self) -> Path:
        if self.dataset_root is None:
            raise ContractError("this command needs a dataset root (--dataset)")
        root = Path(self.dataset_root)
        if not root.is_dir():
            raise ContractError(f"dataset root '{root}' does not exist")
        return root

    def run_dir(self) -> Path:
        path = Path(self.out_dir)
        path.mkdir(parents=True, exist_ok=True)
        return path


def load_run_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Build a RunConfig from an optional JSON file plus CLI overrides."""
    raw: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(RunConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}",
                                  field="config")
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    if "out_dir" not in raw:
        raise ContractError("an output directory is required (--out or config out_dir)")
    return RunConfig(**raw)


# -- artifact I/O -------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: list[str], rows, cfg: RunConfig, seed: int) -> Path:
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg.config_hash} seed={seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def read_csv(path: Path) -> tuple[dict, list[str], list[list[str]]]:
    meta: dict = {}
    with open(path, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    data_lines = []
    for line in lines:
        if line.startswith("#"):
            for token in line[1:].split():
                if "=" in token:
                    key, value = token.split("=", 1)
                    meta[key] = value
        elif line:
            data_lines.append(line)
    rows = list(csv.reader(data_lines))
    return meta, rows[0], rows[1:]


def write_json_artifact(path: Path, payload: dict, cfg: RunConfig, seed: int) -> Path:
    doc = {"config_hash": cfg.config_hash, "seed": seed}
    doc.update(payload)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def require_artifact(cfg: RunConfig, filename: str) -> Path:
    path = cfg.run_dir() / filename
    if not path.exists():
        raise MissingArtifactError(filename, PRODUCERS.get(filename, "earlier stage"))
    return path


def update_manifest(cfg: RunConfig, command: str, artifacts: list[str]) -> Path:
    path = cfg.run_dir() / MANIFEST_JSON
    doc = {"config_hash": cfg.config_hash, "seeds": cfg.seeds_dict(),
           "config": {**cfg.hashable_dict(), "out_dir": cfg.out_dir,
                      "dataset_root": cfg.dataset_root},
           "artifacts": {}, "history": []}
    if path.exists():
        try:
            existing = json.loads(path.read_text())
            doc["artifacts"] = existing.get("artifacts", {})
            doc["history"] = existing.get("history", [])
        except json.JSONDecodeError:
            log.warning("manifest %s was unreadable; rewriting", path)
    for name in artifacts:
        doc["artifacts"][name] = name
    if command not in doc["history"]:
        doc["history"].append(command)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


# -- pipeline commands ---------------------------------------------------------


def cmd_validate(cfg: RunConfig):
    root = cfg.require_dataset()
    report = validate_dataset(root)
    if cfg.out_dir:
        rows = [[e.clip_id, "pass" if e.ok else "fail", e.reason] for e in report.entries]
        write_csv(cfg.run_dir() / VALIDATION_CSV, ["clip_id", "status", "reason"],
                  rows, cfg, cfg.seed)
        update_manifest(cfg, "validate", [VALIDATION_CSV])
    return report


def _normalized_sequences(cfg: RunConfig, dataset):
    items = []
    for clip in sorted(dataset.clips, key=lambda c: c.clip_id):
        if clip.pose3d_seq is None:
            log.warning("clip %s has no 3D poses; skipped", clip.clip_id)
            continue
        normalized = kinematics.normalize(clip.pose3d_seq, clip.joint_map_id)
        items.append((clip.clip_id, normalized))
    return items


def cmd_train(cfg: RunConfig):
    dataset = load_dataset(cfg.require_dataset())
    items = _normalized_sequences(cfg, dataset)
    if not items:
        raise ContractError("no clips with 3D poses to train on")
    result = train([norm.coords for _, norm in items], cfg.model_config(),
                   joint_map_id=cfg.joint_map_id)
    run_dir = cfg.run_dir()
    save_checkpoint(result.model, run_dir / MODEL_FILE)
    write_csv(run_dir / HISTORY_CSV, ["epoch", "loss"],
              [[i, loss] for i, loss in enumerate(result.loss_history)],
              cfg, cfg.model_seed)
    update_manifest(cfg, "train", [MODEL_FILE, HISTORY_CSV])
    return result


def cmd_embed(cfg: RunConfig):
    model = load_checkpoint(require_artifact(cfg, MODEL_FILE))
    dataset = load_dataset(cfg.require_dataset())
    latents = embed_dataset(model, dataset)
    run_dir = cfg.run_dir()
    write_json_artifact(run_dir / LATENTS_JSON, {
        "latent_dim": model.config.latent_dim,
        "clips": [{"clip_id": l.clip_id, "values": l.values.tolist()} for l in latents],
    }, cfg, cfg.model_seed)
    dim = model.config.latent_dim
    write_csv(run_dir / LATENTS_CSV, ["clip_id"] + [f"z{i}" for i in range(dim)],
              [[l.clip_id] + list(l.values) for l in latents], cfg, cfg.model_seed)
    update_manifest(cfg, "embed", [LATENTS_JSON, LATENTS_CSV])
    return latents


def _load_latents(cfg: RunConfig):
    path = require_artifact(cfg, LATENTS_JSON)
    doc = json.loads(path.read_text())
    ids = [entry["clip_id"] for entry in doc["clips"]]
    vectors = np.array([entry["values"] for entry in doc["clips"]], dtype=np.float64)
    if vectors.size == 0:
        raise ContractError("latents artifact is empty; embed produced no vectors")
    return ids, vectors


def cmd_cluster(cfg: RunConfig):
    ids, vectors = _load_latents(cfg)
    model = kmeans_fit(vectors, k=cfg.k, seed=cfg.kmeans_seed, ids=ids)
    run_dir = cfg.run_dir()
    write_csv(run_dir / CLUSTERS_CSV, ["clip_id", "cluster"],
              [[cid, model.assignments[cid]] for cid in ids], cfg, cfg.kmeans_seed)
    write_json_artifact(run_dir / CENTROIDS_JSON, {
        "k": model.k, "inertia": model.inertia, "n_iter": model.n_iter,
        "centroids": model.centroids.tolist(),
    }, cfg, cfg.kmeans_seed)
    # Inertia against k, to guide choosing the cluster count.
    scan_rows = []
    for k in range(1, min(8, len(ids)) + 1):
        scan = kmeans_fit(vectors, k=k, seed=cfg.kmeans_seed, ids=ids)
        scan_rows.append([k, scan.inertia])
    write_csv(run_dir / KSCAN_CSV, ["k", "inertia"], scan_rows, cfg, cfg.kmeans_seed)
    update_manifest(cfg, "cluster", [CLUSTERS_CSV, CENTROIDS_JSON, KSCAN_CSV])
    return model


def _load_assignments(cfg: RunConfig) -> dict[str, int]:
    _meta, _header, rows = read_csv(require_artifact(cfg, CLUSTERS_CSV))
    return {row[0]: int(row[1]) for row in rows}


def cmd_stats(cfg: RunConfig):
    dataset = load_dataset(cfg.require_dataset())
    assignments = _load_assignments(cfg)
    items = _normalized_sequences(cfg, dataset)
    rows = []
    grouped: dict[int, list] = {}
    for clip_id, normalized in items:
        stats = kinematics.shot_stats(normalized, clip_id=clip_id,
                                      vertical_axis=cfg.vertical_axis,
                                      vertical_sign=cfg.vertical_sign)
        cluster = assignments.get(clip_id, -1)
        if cluster < 0:
            log.warning("clip %s has no cluster assignment", clip_id)
        grouped.setdefault(cluster, []).append(stats)
        rows.append([clip_id, cluster, stats.shooting_side, stats.ankle_travel,
                     stats.max_vertical, stats.min_knee_angle])
    if not rows:
        raise ContractError("no clips with 3D poses to compute statistics for")
    run_dir = cfg.run_dir()
    write_csv(run_dir / STATS_CSV,
              ["clip_id", "cluster", "shooting_side", "ankle_travel",
               "max_vertical", "min_knee_angle"], rows, cfg, cfg.seed)

    comparison = kinematics.compare_clusters({c: s for c, s in grouped.items() if c >= 0})
    summary_rows = []
    for entry in comparison.per_cluster:
        summary_rows.append(["mean", entry.cluster, "", entry.count,
                             entry.mean_ankle_travel, entry.mean_max_vertical,
                             entry.mean_min_knee_angle])
    for (a, b), diffs in sorted(comparison.pairwise_pct.items()):
        summary_rows.append(["pct_diff", a, b, "",
                             diffs["ankle_travel"], diffs["max_vertical"],
                             diffs["min_knee_angle"]])
    write_csv(run_dir / SUMMARY_CSV,
              ["row_type", "cluster_a", "cluster_b", "count",
               "ankle_travel", "max_vertical", "min_knee_angle"],
              summary_rows, cfg, cfg.seed)
    update_manifest(cfg, "stats", [STATS_CSV, SUMMARY_CSV])
    return comparison


def cmd_tsne(cfg: RunConfig):
    ids, vectors = _load_latents(cfg)
    embedding = tsne_embed(vectors, perplexity=cfg.perplexity, seed=cfg.tsne_seed,
                           iters=cfg.tsne_iters)
    run_dir = cfg.run_dir()
    write_csv(run_dir / TSNE_CSV, ["clip_id", "x", "y"],
              [[cid, embedding.points[i, 0], embedding.points[i, 1]]
               for i, cid in enumerate(ids)], cfg, cfg.tsne_seed)
    write_csv(run_dir / TSNE_KL_CSV, ["iteration", "kl_divergence"],
              [[it, kl] for it, kl in embedding.kl_history], cfg, cfg.tsne_seed)
    update_manifest(cfg, "tsne", [TSNE_CSV, TSNE_KL_CSV])
    return embedding


# -- evaluation commands --------------------------------------------------------


def _load_pose_file(path: str | Path) -> dict[str, "np.ndarray"]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "poses" not in doc:
        raise ValidationError("pose file needs a top-level 'poses' list", field="poses")
    out = {}
    for i, entry in enumerate(doc["poses"]):
        pose_id = str(entry.get("id", i))
        joints = entry.get("joints")
        if joints is None:
            raise ValidationError("pose entry missing 'joints'", field="poses")
        out[pose_id] = joints
    return out


def _pose_from_raw(raw) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != 17 or arr.shape[1] not in (2, 3):
        raise ValidationError(f"joints must be 17x2 or 17x3, got {arr.shape}",
                              field="joints")
    visible = arr[:, 2].astype(bool) if arr.shape[1] == 3 else np.ones(17, dtype=bool)
    return arr[:, :2], visible


def cmd_eval_pose(cfg: RunConfig, gt_path: str, pred_path: str):
    from .dataset import Pose2D
    gt_raw = _load_pose_file(gt_path)
    pred_raw = _load_pose_file(pred_path)
    missing = sorted(set(gt_raw) ^ set(pred_raw))
    if missing:
        raise ValidationError(f"gt/pred pose ids do not match: {missing[:5]}",
                              field="poses")
    pairs = []
    for pose_id in sorted(gt_raw):
        gt_joints, gt_visible = _pose_from_raw(gt_raw[pose_id])
        pred_joints, _ = _pose_from_raw(pred_raw[pose_id])
        pairs.append((pred_joints, Pose2D(joints=gt_joints, visible=gt_visible)))

    joint_map = get_joint_map(cfg.joint_map_id)
    groups = pdj_by_group(pairs, cfg.pdj_threshold, joint_map)
    mean_curve = pdj_curve(pairs, np.array([cfg.pdj_threshold]), joint_map)
    auc, _curve = pdj_auc(pairs, joint_map=joint_map)
    payload = {
        "joint_map_id": cfg.joint_map_id,
        "pdj_threshold": cfg.pdj_threshold,
        "num_pairs": len(pairs),
        "groups": {k: (None if v is None else float(v)) for k, v in groups.items()},
        "pdj": float(mean_curve[0]),
        "auc": float(auc),
    }
    write_json_artifact(cfg.run_dir() / EVAL_POSE_JSON, payload, cfg, cfg.seed)
    update_manifest(cfg, "eval-pose", [EVAL_POSE_JSON])
    return payload


def _load_detection_file(path: str | Path, with_confidence: bool):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "frames" not in doc:
        raise ValidationError("detections file needs a top-level 'frames' list",
                              field="frames")
    out: dict[int, list] = {}
    for entry in doc["frames"]:
        frame = int(entry["frame_index"])
        boxes = []
        for b in entry.get("boxes", []):
            box = (float(b["x"]), float(b["y"]), float(b["w"]), float(b["h"]))
            if with_confidence:
                boxes.append(ScoredBox(box, float(b["confidence"])))
            else:
                boxes.append(box)
        out[frame] = boxes
    return out


def cmd_eval_detect(cfg: RunConfig, gt_path: str, pred_path: str):
    detections = DetectionSet(gt=_load_detection_file(gt_path, with_confidence=False),
                              preds=_load_detection_file(pred_path, with_confidence=True))
    result = detection_pr_ap(detections, iou_threshold=cfg.iou_threshold)
    payload = {
        "iou_threshold": cfg.iou_threshold,
        "precision": result.precision,
        "recall": result.recall,
        "ap": result.ap,
        "true_positives": result.true_positives,
        "false_positives": result.false_positives,
        "num_gt": result.num_gt,
        "no_predictions": result.no_predictions,
    }
    write_json_artifact(cfg.run_dir() / EVAL_DETECT_JSON, payload, cfg, cfg.seed)
    update_manifest(cfg, "eval-detect", [EVAL_DETECT_JSON])
    return payload


def _load_track_file(path: str | Path) -> TrackSet:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "tracklets" not in doc:
        raise ValidationError("tracks file needs a top-level 'tracklets' list",
                              field="tracklets")
    frames: dict[int, dict[int, tuple]] = {}
    for group in doc["tracklets"]:
        track_id = int(group["track_id"])
        for b in group.get("boxes", []):
            frame = int(b["frame_index"])
            per_frame = frames.setdefault(frame, {})
            if track_id in per_frame:
                raise ValidationError(f"track {track_id} appears twice in frame {frame}",
                                      field="tracklets")
            per_frame[track_id] = (float(b["x"]), float(b["y"]),
                                   float(b["w"]), float(b["h"]))
    return TrackSet(frames=frames)


def cmd_eval_track(cfg: RunConfig, gt_path: str, pred_path: str):
    result = hota(_load_track_file(gt_path), _load_track_file(pred_path))
    payload = {
        "hota": result.hota,
        "deta": result.deta,
        "assa": result.assa,
        "alphas": [float(a) for a in result.alphas],
        "hota_curve": [float(v) for v in result.hota_curve],
        "deta_curve": [float(v) for v in result.deta_curve],
        "assa_curve": [float(v) for v in result.assa_curve],
    }
    write_json_artifact(cfg.run_dir() / EVAL_TRACK_JSON, payload, cfg, cfg.seed)
    update_manifest(cfg, "eval-track", [EVAL_TRACK_JSON])
    return payload


def _load_selection_file(path: str | Path) -> list[ClipScores]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "clips" not in doc:
        raise ValidationError("selection file needs a top-level 'clips' list",
                              field="clips")
    clips = []
    for entry in doc["clips"]:
        clips.append(ClipScores(
            clip_id=str(entry["clip_id"]),
            tracklets=[TrackletScore(track_id=int(t["track_id"]),
                                     score=float(t["score"]),
                                     is_shooter=bool(t["is_shooter"]))
                       for t in entry.get("tracklets", [])],
        ))
    return clips


def cmd_eval_select(cfg: RunConfig, scores_path: str):
    result = selection_metrics(_load_selection_file(scores_path),
                               decision_threshold=cfg.decision_threshold)
    payload = {
        "decision_threshold": cfg.decision_threshold,
        "precision": result.precision,
        "recall": result.recall,
        "accuracy": result.accuracy,
        "clip_accuracy": result.clip_accuracy,
        "num_clips": result.num_clips,
        "num_tracklets": result.num_tracklets,
        "skipped_clips": result.skipped_clips,
    }
    write_json_artifact(cfg.run_dir() / EVAL_SELECT_JSON, payload, cfg, cfg.seed)
    update_manifest(cfg, "eval-select", [EVAL_SELECT_JSON])
    return payload


def cmd_report(cfg: RunConfig) -> Path:
    from .report import write_report
    for artifact in (CLUSTERS_CSV, TSNE_CSV, STATS_CSV, SUMMARY_CSV):
        require_artifact(cfg, artifact)
    report_dir = write_report(cfg)
    update_manifest(cfg, "report", [REPORT_DIR])
    return report_dir
