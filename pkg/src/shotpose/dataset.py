"""On-disk schema for shot clips and the loaders that enforce it.

A dataset is a directory of clip subdirectories. Each clip directory
holds ``clip.json`` (identity, match metadata, tracklets, optional 2D
poses with visibility, optional crop geometry) and, when 3D poses are
available, ``pose3d.json`` (a 20 x 17 x 3 array). Field names are
documented in the repository README; parsing either returns a fully
validated ShotClip or raises a structured error.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, NoVisibleTorsoError, ValidationError
from .joints import NUM_JOINTS, JointMap, get_joint_map

SCHEMA_VERSION = 1
CLIP_FRAMES = 20

CLIP_FILE = "clip.json"
POSE3D_FILE = "pose3d.json"
DATASET_META_FILE = "meta.json"


@dataclass(frozen=True)
class BoundingBox:
    frame_index: int
    x: float
    y: float
    w: float
    h: float
    track_id: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(f"box extents must be positive, got w={self.w}, h={self.h}",
                                  field="tracklets")
        for v in (self.x, self.y, self.w, self.h):
            if not math.isfinite(v):
                raise ValidationError("box coordinates must be finite", field="tracklets")

    @property
    def xywh(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass
class Pose2D:
    joints: np.ndarray          # (17, 2)
    visible: np.ndarray         # (17,) bool

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        self.visible = np.asarray(self.visible, dtype=bool)
        if self.joints.shape != (NUM_JOINTS, 2):
            raise ValidationError(f"2D pose must be ({NUM_JOINTS}, 2), got {self.joints.shape}",
                                  field="pose2d")
        if self.visible.shape != (NUM_JOINTS,):
            raise ValidationError("visibility flags must have one entry per joint",
                                  field="pose2d")
        if not np.all(np.isfinite(self.joints)):
            raise ValidationError("2D pose coordinates must be finite", field="pose2d")


@dataclass
class Pose3D:
    joints: np.ndarray          # (17, 3)

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        if self.joints.shape != (NUM_JOINTS, 3):
            raise ValidationError(f"3D pose must be ({NUM_JOINTS}, 3), got {self.joints.shape}",
                                  field="pose3d")
        if not np.all(np.isfinite(self.joints)):
            raise ValidationError("3D pose coordinates must be finite", field="pose3d")


@dataclass(frozen=True)
class CropWindow:
    frame_index: int
    center: tuple[float, float]
    size: tuple[float, float]


@dataclass(frozen=True)
class MatchMeta:
    league: str = ""
    date: str = ""
    half: int = 0
    timestamp: str = ""


@dataclass
class Tracklet:
    track_id: int
    boxes: list[BoundingBox]


@dataclass
class ShotClip:
    clip_id: str
    match: MatchMeta = field(default_factory=MatchMeta)
    frame_count: int = CLIP_FRAMES
    joint_map_id: str = "h36m_17"
    tracklets: list[Tracklet] = field(default_factory=list)
    shooter_track_id: int | None = None
    pose2d_seq: list[Pose2D] | None = None
    pose3d_seq: np.ndarray | None = None      # (20, 17, 3)
    crops: list[CropWindow] | None = None

    def track_ids(self) -> list[int]:
        return [t.track_id for t in self.tracklets]

    def validate(self) -> None:
        if self.frame_count != CLIP_FRAMES:
            raise ValidationError(f"frame_count must be {CLIP_FRAMES}, got {self.frame_count}",
                                  field="frame_count", clip_id=self.clip_id)
        seen_ids = set()
        for tracklet in self.tracklets:
            if tracklet.track_id in seen_ids:
                raise ValidationError(f"duplicate track_id {tracklet.track_id}",
                                      field="tracklets", clip_id=self.clip_id)
            seen_ids.add(tracklet.track_id)
            frames = [b.frame_index for b in tracklet.boxes]
            if len(frames) != len(set(frames)):
                raise ValidationError(
                    f"track {tracklet.track_id} has duplicated frames",
                    field="tracklets", clip_id=self.clip_id)
            for box in tracklet.boxes:
                if not 0 <= box.frame_index < self.frame_count:
                    raise ValidationError(
                        f"track {tracklet.track_id} frame_index {box.frame_index} out of range",
                        field="tracklets", clip_id=self.clip_id)
                if box.track_id != tracklet.track_id:
                    raise ValidationError(
                        f"box track_id {box.track_id} disagrees with tracklet {tracklet.track_id}",
                        field="tracklets", clip_id=self.clip_id)
        if self.shooter_track_id is not None and self.shooter_track_id not in seen_ids:
            raise ValidationError(
                f"shooter_track_id {self.shooter_track_id} names no tracklet",
                field="shooter_track_id", clip_id=self.clip_id)
        if self.pose2d_seq is not None and len(self.pose2d_seq) != self.frame_count:
            raise ValidationError(
                f"2D pose sequence has {len(self.pose2d_seq)} frames, expected {self.frame_count}",
                field="frame_count", clip_id=self.clip_id)
        if self.pose3d_seq is not None:
            arr = np.asarray(self.pose3d_seq, dtype=np.float64)
            if arr.shape != (self.frame_count, NUM_JOINTS, 3):
                raise ValidationError(
                    f"3D pose sequence has shape {arr.shape}, "
                    f"expected {(self.frame_count, NUM_JOINTS, 3)}",
                    field="frame_count", clip_id=self.clip_id)
            if not np.all(np.isfinite(arr)):
                raise ValidationError("3D pose sequence must be finite",
                                      field="pose3d", clip_id=self.clip_id)
        if self.crops is not None and len(self.crops) != self.frame_count:
            raise ValidationError(
                f"crop geometry has {len(self.crops)} frames, expected {self.frame_count}",
                field="crop", clip_id=self.clip_id)


@dataclass
class Dataset:
    clips: list[ShotClip]
    split: str = "train"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        ids = [c.clip_id for c in self.clips]
        if len(ids) != len(set(ids)):
            raise ValidationError("clip_ids must be unique", field="clip_id")

    def __len__(self) -> int:
        return len(self.clips)


def _require(raw: dict, key: str, clip_id: str | None):
    if key not in raw:
        raise ValidationError("missing required field", field=key, clip_id=clip_id)
    return raw[key]


def _parse_pose2d_frame(entry, clip_id: str) -> Pose2D:
    joints = np.zeros((NUM_JOINTS, 2))
    visible = np.ones(NUM_JOINTS, dtype=bool)
    if not isinstance(entry, list) or len(entry) != NUM_JOINTS:
        raise ValidationError(f"each 2D pose frame needs {NUM_JOINTS} joints",
                              field="pose2d", clip_id=clip_id)
    for j, item in enumerate(entry):
        if not isinstance(item, list) or len(item) not in (2, 3):
            raise ValidationError("2D joints must be [x, y] or [x, y, visible]",
                                  field="pose2d", clip_id=clip_id)
        joints[j, 0] = float(item[0])
        joints[j, 1] = float(item[1])
        if len(item) == 3:
            visible[j] = bool(item[2])
    return Pose2D(joints=joints, visible=visible)


def _clip_from_dict(raw: dict, clip_id_hint: str | None = None) -> ShotClip:
    try:
        return _clip_from_dict_unchecked(raw, clip_id_hint)
    except ValidationError:
        raise
    except (TypeError, ValueError, KeyError, AttributeError, IndexError) as exc:
        # Parsing is total: every malformed document becomes a structured error.
        raise ValidationError(f"malformed clip document: {exc}", clip_id=clip_id_hint) from exc


def _clip_from_dict_unchecked(raw: dict, clip_id_hint: str | None = None) -> ShotClip:
    if not isinstance(raw, dict):
        raise ValidationError("clip.json must contain a JSON object", clip_id=clip_id_hint)
    clip_id = str(_require(raw, "clip_id", clip_id_hint))
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema_version {version}",
                              field="schema_version", clip_id=clip_id)
    match_raw = raw.get("match", {})
    match = MatchMeta(
        league=str(match_raw.get("league", "")),
        date=str(match_raw.get("date", "")),
        half=int(match_raw.get("half", 0)),
        timestamp=str(match_raw.get("timestamp", "")),
    )
    frame_count = int(_require(raw, "frame_count", clip_id))

    tracklets = []
    for group in raw.get("tracklets", []):
        track_id = int(_require(group, "track_id", clip_id))
        boxes = []
        for b in group.get("boxes", []):
            try:
                boxes.append(BoundingBox(
                    frame_index=int(_require(b, "frame_index", clip_id)),
                    x=float(b["x"]), y=float(b["y"]),
                    w=float(b["w"]), h=float(b["h"]),
                    track_id=track_id,
                ))
            except (KeyError, TypeError, ValueError) as exc:
                if isinstance(exc, ValidationError):
                    raise
                raise ValidationError(f"malformed box: {exc}",
                                      field="tracklets", clip_id=clip_id) from exc
        boxes.sort(key=lambda bb: bb.frame_index)
        tracklets.append(Tracklet(track_id=track_id, boxes=boxes))

    shooter = raw.get("shooter_track_id")
    shooter_track_id = int(shooter) if shooter is not None else None

    pose2d_seq = None
    if raw.get("pose2d") is not None:
        pose2d_seq = [_parse_pose2d_frame(fr, clip_id) for fr in raw["pose2d"]]

    crops = None
    if raw.get("crop") is not None:
        crops = []
        for c in raw["crop"]:
            try:
                crops.append(CropWindow(
                    frame_index=int(c["frame_index"]),
                    center=(float(c["center"][0]), float(c["center"][1])),
                    size=(float(c["size"][0]), float(c["size"][1])),
                ))
            except (KeyError, TypeError, ValueError, IndexError) as exc:
                raise ValidationError(f"malformed crop window: {exc}",
                                      field="crop", clip_id=clip_id) from exc

    clip = ShotClip(
        clip_id=clip_id,
        match=match,
        frame_count=frame_count,
        joint_map_id=str(raw.get("joint_map_id", "h36m_17")),
        tracklets=tracklets,
        shooter_track_id=shooter_track_id,
        pose2d_seq=pose2d_seq,
        crops=crops,
    )
    return clip


def _read_json(path: Path, clip_id: str | None):
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ValidationError(f"not valid JSON: {exc}", field=path.name, clip_id=clip_id) from exc


def load_shot_clip(clip_dir: str | Path) -> ShotClip:
    """Read and fully validate one clip directory."""
    clip_dir = Path(clip_dir)
    raw = _read_json(clip_dir / CLIP_FILE, clip_dir.name)
    clip = _clip_from_dict(raw, clip_dir.name)

    pose3d_path = clip_dir / POSE3D_FILE
    if pose3d_path.exists():
        pose_raw = _read_json(pose3d_path, clip.clip_id)
        if not isinstance(pose_raw, dict) or "joints" not in pose_raw:
            raise ValidationError("pose3d.json needs a 'joints' array",
                                  field="pose3d", clip_id=clip.clip_id)
        try:
            arr = np.asarray(pose_raw["joints"], dtype=np.float64)
        except ValueError as exc:
            raise ValidationError(f"ragged pose3d array: {exc}",
                                  field="pose3d", clip_id=clip.clip_id) from exc
        clip.pose3d_seq = arr

    clip.validate()
    return clip


def save_shot_clip(clip: ShotClip, clip_dir: str | Path) -> None:
    """Write clip.json (and pose3d.json when poses are present)."""
    clip.validate()
    clip_dir = Path(clip_dir)
    clip_dir.mkdir(parents=True, exist_ok=True)

    doc: dict = {
        "schema_version": SCHEMA_VERSION,
        "clip_id": clip.clip_id,
        "match": {
            "league": clip.match.league,
            "date": clip.match.date,
            "half": clip.match.half,
            "timestamp": clip.match.timestamp,
        },
        "frame_count": clip.frame_count,
        "joint_map_id": clip.joint_map_id,
        "tracklets": [
            {
                "track_id": t.track_id,
                "boxes": [
                    {"frame_index": b.frame_index, "x": b.x, "y": b.y, "w": b.w, "h": b.h}
                    for b in t.boxes
                ],
            }
            for t in clip.tracklets
        ],
    }
    if clip.shooter_track_id is not None:
        doc["shooter_track_id"] = clip.shooter_track_id
    if clip.pose2d_seq is not None:
        doc["pose2d"] = [
            [[float(p.joints[j, 0]), float(p.joints[j, 1]), int(p.visible[j])]
             for j in range(NUM_JOINTS)]
            for p in clip.pose2d_seq
        ]
    if clip.crops is not None:
        doc["crop"] = [
            {"frame_index": c.frame_index,
             "center": [c.center[0], c.center[1]],
             "size": [c.size[0], c.size[1]]}
            for c in clip.crops
        ]

    with open(clip_dir / CLIP_FILE, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")

    if clip.pose3d_seq is not None:
        pose_doc = {
            "schema_version": SCHEMA_VERSION,
            "clip_id": clip.clip_id,
            "joints": np.asarray(clip.pose3d_seq, dtype=np.float64).tolist(),
        }
        with open(clip_dir / POSE3D_FILE, "w", encoding="utf-8") as fh:
            json.dump(pose_doc, fh)
            fh.write("\n")


def clip_directories(root: str | Path) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(f"dataset root '{root}' is not a readable directory")
    return sorted(p for p in root.iterdir() if p.is_dir())


def load_dataset(root: str | Path, split: str | None = None) -> Dataset:
    """Load every clip under `root`, ordered by directory name."""
    root = Path(root)
    meta = {}
    meta_path = root / DATASET_META_FILE
    if meta_path.exists():
        meta = _read_json(meta_path, None)
    clips = [load_shot_clip(d) for d in clip_directories(root)]
    return Dataset(
        clips=clips,
        split=split or str(meta.get("split", "train")),
        schema_version=int(meta.get("schema_version", SCHEMA_VERSION)),
    )


def save_dataset(dataset: Dataset, root: str | Path) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / DATASET_META_FILE, "w", encoding="utf-8") as fh:
        json.dump({"schema_version": dataset.schema_version, "split": dataset.split}, fh)
        fh.write("\n")
    for clip in dataset.clips:
        save_shot_clip(clip, root / clip.clip_id)


@dataclass
class ClipReport:
    clip_id: str
    ok: bool
    reason: str = ""


@dataclass
class ValidationReport:
    entries: list[ClipReport]

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    @property
    def failures(self) -> list[ClipReport]:
        return [e for e in self.entries if not e.ok]


def validate_dataset(root: str | Path) -> ValidationReport:
    """Check every clip directory under `root` and report per-clip results."""
    entries = []
    for clip_dir in clip_directories(root):
        try:
            load_shot_clip(clip_dir)
        except (ValidationError, FileNotFoundError) as exc:
            entries.append(ClipReport(clip_id=clip_dir.name, ok=False, reason=str(exc)))
        else:
            entries.append(ClipReport(clip_id=clip_dir.name, ok=True))
    return ValidationReport(entries=entries)


def select_shooter_pose(candidates: list[Pose2D], crop_center,
                        joint_map: JointMap | str = "h36m_17") -> int:
    """Index of the candidate whose torso point lies nearest the crop center.

    Candidates whose torso joints are not all visible are skipped; ties
    break toward the lowest index.
    """
    if not candidates:
        raise ContractError("select_shooter_pose needs at least one candidate")
    if isinstance(joint_map, str):
        joint_map = get_joint_map(joint_map)
    center = np.asarray(crop_center, dtype=np.float64)

    best_index = None
    best_dist = np.inf
    for i, pose in enumerate(candidates):
        if not joint_map.role_visible(pose.visible, "torso"):
            continue
        torso = joint_map.role_point(pose.joints, "torso")
        dist = float(np.linalg.norm(torso - center))
        if dist < best_dist:
            best_dist = dist
            best_index = i
    if best_index is None:
        raise NoVisibleTorsoError("torso joints invisible in every candidate pose")
    return best_index
