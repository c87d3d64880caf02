"""Skeleton conventions: joint names, edges, and semantic roles.

Two 17-joint conventions are built in. A joint map declares which
indices play each anatomical role (pelvis, torso reference, shoulders,
hips, knees, ankles) and how the joints group into the eight body-part
columns used by pose evaluation reports. Roles may span several joints;
the role point is the mean of the member coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

NUM_JOINTS = 17

ROLE_NAMES = (
    "pelvis", "torso",
    "left_shoulder", "right_shoulder",
    "left_hip", "right_hip",
    "left_knee", "right_knee",
    "left_ankle", "right_ankle",
)

PDJ_GROUP_ORDER = ("Head", "Shoulder", "Elbow", "Wrist", "Body", "Hip", "Knee", "Ankle")


@dataclass(frozen=True)
class JointMap:
    map_id: str
    names: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    roles: dict[str, tuple[int, ...]] = field(default_factory=dict)
    pdj_groups: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.names) != NUM_JOINTS:
            raise ValidationError(f"joint map needs {NUM_JOINTS} names, got {len(self.names)}",
                                  field="names")
        for a, b in self.edges:
            if not (0 <= a < NUM_JOINTS and 0 <= b < NUM_JOINTS):
                raise ValidationError(f"edge ({a}, {b}) out of range", field="edges")
        for role in ROLE_NAMES:
            if role not in self.roles:
                raise ValidationError(f"missing role '{role}'", field="roles")
        for role, idxs in self.roles.items():
            for i in idxs:
                if not 0 <= i < NUM_JOINTS:
                    raise ValidationError(f"role '{role}' index {i} out of range", field="roles")
        for group, idxs in self.pdj_groups.items():
            for i in idxs:
                if not 0 <= i < NUM_JOINTS:
                    raise ValidationError(f"group '{group}' index {i} out of range",
                                          field="pdj_groups")

    def role_indices(self, role: str) -> tuple[int, ...]:
        return self.roles[role]

    def role_point(self, coords: np.ndarray, role: str) -> np.ndarray:
        """Mean position of the joints making up `role`.

        `coords` is (17, D); returns a length-D vector.
        """
        idxs = list(self.roles[role])
        return np.asarray(coords, dtype=np.float64)[idxs].mean(axis=0)

    def role_visible(self, visible: np.ndarray, role: str) -> bool:
        """A derived role point counts as visible only if all members are."""
        idxs = list(self.roles[role])
        return bool(np.all(np.asarray(visible, dtype=bool)[idxs]))

    def torso_length(self, coords: np.ndarray) -> float:
        """Shoulder-center to hip-center distance."""
        coords = np.asarray(coords, dtype=np.float64)
        shoulders = 0.5 * (self.role_point(coords, "left_shoulder")
                           + self.role_point(coords, "right_shoulder"))
        hips = 0.5 * (self.role_point(coords, "left_hip")
                      + self.role_point(coords, "right_hip"))
        return float(np.linalg.norm(shoulders - hips))

    def to_dict(self) -> dict:
        return {
            "map_id": self.map_id,
            "names": list(self.names),
            "edges": [list(e) for e in self.edges],
            "roles": {k: list(v) for k, v in self.roles.items()},
            "pdj_groups": {k: list(v) for k, v in self.pdj_groups.items()},
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "JointMap":
        try:
            return cls(
                map_id=str(raw["map_id"]),
                names=tuple(str(n) for n in raw["names"]),
                edges=tuple((int(a), int(b)) for a, b in raw["edges"]),
                roles={str(k): tuple(int(i) for i in v) for k, v in raw["roles"].items()},
                pdj_groups={str(k): tuple(int(i) for i in v)
                            for k, v in raw.get("pdj_groups", {}).items()},
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed joint map: {exc}", field="joint_map") from exc


H36M_17 = JointMap(
    map_id="h36m_17",
    names=(
        "pelvis", "right_hip", "right_knee", "right_ankle",
        "left_hip", "left_knee", "left_ankle",
        "spine", "thorax", "neck", "head",
        "left_shoulder", "left_elbow", "left_wrist",
        "right_shoulder", "right_elbow", "right_wrist",
    ),
    edges=(
        (0, 1), (1, 2), (2, 3),
        (0, 4), (4, 5), (5, 6),
        (0, 7), (7, 8), (8, 9), (9, 10),
        (8, 11), (11, 12), (12, 13),
        (8, 14), (14, 15), (15, 16),
    ),
    roles={
        "pelvis": (0,),
        "torso": (7,),
        "left_shoulder": (11,), "right_shoulder": (14,),
        "left_hip": (4,), "right_hip": (1,),
        "left_knee": (5,), "right_knee": (2,),
        "left_ankle": (6,), "right_ankle": (3,),
    },
    pdj_groups={
        "Head": (9, 10),
        "Shoulder": (11, 14),
        "Elbow": (12, 15),
        "Wrist": (13, 16),
        "Body": (0, 7, 8),
        "Hip": (1, 4),
        "Knee": (2, 5),
        "Ankle": (3, 6),
    },
)

COCO_17 = JointMap(
    map_id="coco_17",
    names=(
        "nose", "left_eye", "right_eye", "left_ear", "right_ear",
        "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
        "left_wrist", "right_wrist", "left_hip", "right_hip",
        "left_knee", "right_knee", "left_ankle", "right_ankle",
    ),
    edges=(
        (0, 1), (0, 2), (1, 3), (2, 4),
        (3, 5), (4, 6), (5, 6),
        (5, 7), (7, 9), (6, 8), (8, 10),
        (5, 11), (6, 12), (11, 12),
        (11, 13), (13, 15), (12, 14), (14, 16),
    ),
    roles={
        "pelvis": (11, 12),
        "torso": (5, 6, 11, 12),
        "left_shoulder": (5,), "right_shoulder": (6,),
        "left_hip": (11,), "right_hip": (12,),
        "left_knee": (13,), "right_knee": (14,),
        "left_ankle": (15,), "right_ankle": (16,),
    },
    pdj_groups={
        "Head": (0, 1, 2, 3, 4),
        "Shoulder": (5, 6),
        "Elbow": (7, 8),
        "Wrist": (9, 10),
        "Body": (),
        "Hip": (11, 12),
        "Knee": (13, 14),
        "Ankle": (15, 16),
    },
)

BUILTIN_JOINT_MAPS = {m.map_id: m for m in (H36M_17, COCO_17)}


def get_joint_map(map_id: str) -> JointMap:
    """Resolve a built-in map id, or load a joint-map JSON file by path."""
    if map_id in BUILTIN_JOINT_MAPS:
        return BUILTIN_JOINT_MAPS[map_id]
    path = Path(map_id)
    if path.suffix == ".json" and path.exists():
        return load_joint_map(path)
    raise ValidationError(
        f"unknown joint map '{map_id}' (built-ins: {sorted(BUILTIN_JOINT_MAPS)}, "
        "or pass a path to a joint-map JSON file)",
        field="joint_map_id")


def load_joint_map(path: str | Path) -> JointMap:
    with open(path, encoding="utf-8") as fh:
        return JointMap.from_dict(json.load(fh))


def save_joint_map(joint_map: JointMap, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(joint_map.to_dict(), fh, indent=2)
        fh.write("\n")


def remap_joints(coords: np.ndarray, order) -> np.ndarray:
    """Reorder the joint axis: output joint i is input joint order[i]."""
    order = list(order)
    if sorted(order) != list(range(NUM_JOINTS)):
        raise ValidationError("joint order must be a permutation of 0..16", field="order")
    arr = np.asarray(coords)
    return arr[..., order, :] if arr.ndim >= 2 else arr[order]


def inverse_order(order) -> list[int]:
    inv = [0] * len(order)
    for target, source in enumerate(order):
        inv[source] = target
    return inv
