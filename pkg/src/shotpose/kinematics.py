"""Pose-sequence normalization and per-shot kinematic statistics."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegeneratePoseError
from .joints import JointMap, get_joint_map

log = logging.getLogger(__name__)

# Index window (0-based, inclusive) around ball contact used to decide
# which foot is striking.
SHOT_WINDOW = (9, 14)

DEGENERATE_EPS = 1e-9


@dataclass
class NormalizedSequence:
    """Pelvis-centered, torso-scaled pose sequence plus the inverse record."""

    coords: np.ndarray          # (T, 17, 3)
    pelvis_offsets: np.ndarray  # (T, 3)
    scale: float
    joint_map_id: str = "h36m_17"


@dataclass
class ShotStats:
    clip_id: str
    shooting_side: str          # "left" | "right"
    ankle_travel: float
    max_vertical: float
    min_knee_angle: float


def normalize(seq: np.ndarray, joint_map: JointMap | str = "h36m_17") -> NormalizedSequence:
    """Center the pelvis at the origin each frame and scale by mean torso length."""
    if isinstance(joint_map, str):
        joint_map = get_joint_map(joint_map)
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 3 or seq.shape[1:] != (17, 3):
        raise ContractError(f"expected a (T, 17, 3) sequence, got {seq.shape}")

    offsets = np.stack([joint_map.role_point(frame, "pelvis") for frame in seq])
    centered = seq - offsets[:, None, :]

    torso_lengths = np.array([joint_map.torso_length(frame) for frame in centered])
    scale = float(torso_lengths.mean())
    if scale < DEGENERATE_EPS:
        raise DegeneratePoseError(f"mean torso length {scale} is degenerate")

    return NormalizedSequence(
        coords=centered / scale,
        pelvis_offsets=offsets,
        scale=scale,
        joint_map_id=joint_map.map_id,
    )


def denormalize(normalized: NormalizedSequence) -> np.ndarray:
    """Invert `normalize` exactly using the recorded offsets and scale."""
    return normalized.coords * normalized.scale + normalized.pelvis_offsets[:, None, :]


def knee_angle(pose: np.ndarray, side: str, joint_map: JointMap | str = "h36m_17") -> float:
    """Angle at the knee between the thigh and shank, in degrees.

    180 means a fully straight leg; values always land in [0, 180].
    """
    if isinstance(joint_map, str):
        joint_map = get_joint_map(joint_map)
    if side not in ("left", "right"):
        raise ContractError(f"side must be 'left' or 'right', got {side!r}")
    pose = np.asarray(pose, dtype=np.float64)
    hip = joint_map.role_point(pose, f"{side}_hip")
    knee = joint_map.role_point(pose, f"{side}_knee")
    ankle = joint_map.role_point(pose, f"{side}_ankle")
    thigh = hip - knee
    shank = ankle - knee
    n1 = np.linalg.norm(thigh)
    n2 = np.linalg.norm(shank)
    if n1 < DEGENERATE_EPS or n2 < DEGENERATE_EPS:
        raise DegeneratePoseError(f"{side} leg has a zero-length segment")
    cosine = float(np.dot(thigh, shank) / (n1 * n2))
    return float(np.degrees(np.arccos(np.clip(cosine, -1.0, 1.0))))


def _ankle_track(seq: NormalizedSequence, side: str, joint_map: JointMap) -> np.ndarray:
    idx = joint_map.role_indices(f"{side}_ankle")[0]
    return seq.coords[:, idx, :]


def ankle_travel(seq: NormalizedSequence, side: str) -> float:
    """Total Euclidean distance covered by one ankle across the clip."""
    if side not in ("left", "right"):
        raise ContractError(f"side must be 'left' or 'right', got {side!r}")
    joint_map = get_joint_map(seq.joint_map_id)
    track = _ankle_track(seq, side, joint_map)
    steps = np.diff(track, axis=0)
    return float(np.sum(np.linalg.norm(steps, axis=1)))


def shooting_foot(seq: NormalizedSequence) -> str:
    """Side whose ankle moves more inside the strike window; ties go right."""
    joint_map = get_joint_map(seq.joint_map_id)
    lo, hi = SHOT_WINDOW
    if lo >= seq.coords.shape[0] - 1:
        # Sequence too short for the canonical window: use all of it.
        lo, hi = 0, seq.coords.shape[0] - 1
    hi = min(hi, seq.coords.shape[0] - 1)
    displacement = {}
    for side in ("left", "right"):
        track = _ankle_track(seq, side, joint_map)[lo:hi + 1]
        displacement[side] = float(np.sum(np.linalg.norm(np.diff(track, axis=0), axis=1)))
    return "left" if displacement["left"] > displacement["right"] else "right"


def shot_stats(seq: NormalizedSequence, clip_id: str = "",
               vertical_axis: int = 1, vertical_sign: float = 1.0) -> ShotStats:
    """Per-clip statistics of the shooting leg.

    `vertical_axis`/`vertical_sign` select which camera coordinate means
    "up"; the default treats +y as up.
    """
    joint_map = get_joint_map(seq.joint_map_id)
    side = shooting_foot(seq)
    track = _ankle_track(seq, side, joint_map)
    angles = [knee_angle(frame, side, joint_map) for frame in seq.coords]
    return ShotStats(
        clip_id=clip_id,
        shooting_side=side,
        ankle_travel=ankle_travel(seq, side),
        max_vertical=float(np.max(vertical_sign * track[:, vertical_axis])),
        min_knee_angle=float(min(angles)),
    )


@dataclass
class ClusterStats:
    cluster: int
    count: int
    mean_ankle_travel: float
    mean_max_vertical: float
    mean_min_knee_angle: float


@dataclass
class ClusterComparison:
    per_cluster: list[ClusterStats]
    # (cluster_a, cluster_b) -> metric name -> percent difference (a-b)/b*100
    pairwise_pct: dict[tuple[int, int], dict[str, float]]


STAT_FIELDS = ("ankle_travel", "max_vertical", "min_knee_angle")


def compare_clusters(stats_by_cluster: dict[int, list[ShotStats]]) -> ClusterComparison:
    """Per-cluster means of the shot statistics and pairwise percent differences."""
    per_cluster = []
    means: dict[int, dict[str, float]] = {}
    for cluster in sorted(stats_by_cluster):
        stats = stats_by_cluster[cluster]
        if not stats:
            log.warning("cluster %d is empty; excluded from comparison", cluster)
            continue
        mean = {f: float(np.mean([getattr(s, f) for s in stats])) for f in STAT_FIELDS}
        means[cluster] = mean
        per_cluster.append(ClusterStats(
            cluster=cluster,
            count=len(stats),
            mean_ankle_travel=mean["ankle_travel"],
            mean_max_vertical=mean["max_vertical"],
            mean_min_knee_angle=mean["min_knee_angle"],
        ))
    if not per_cluster:
        raise ContractError("compare_clusters needs at least one non-empty cluster")

    pairwise: dict[tuple[int, int], dict[str, float]] = {}
    ordered = sorted(means)
    for a in ordered:
        for b in ordered:
            if a == b:
                continue
            diffs = {}
            for f in STAT_FIELDS:
                base = means[b][f]
                diffs[f] = float("nan") if base == 0 else (means[a][f] - base) / base * 100.0
            pairwise[(a, b)] = diffs
    return ClusterComparison(per_cluster=per_cluster, pairwise_pct=pairwise)
