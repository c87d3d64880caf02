"""Synthetic shot-clip generator.

Produces parameterized sinusoidal leg-swing motions in two styles (a
wide, deep-kneed swing and a compact, quicker one) so the full pipeline
can run without real match data. Clips come with 3D pose sequences, a
projected 2D pose sequence, shooter and decoy tracklets, and crop
geometry, all in the canonical on-disk schema.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import (
    CLIP_FRAMES, BoundingBox, CropWindow, Dataset, MatchMeta, Pose2D,
    ShotClip, Tracklet, save_dataset,
)

THIGH = 0.45
SHANK = 0.45

# Standing skeleton in the h36m_17 joint order, y up, unit-free.
BASE_POSE = np.array([
    [0.00, 0.00, 0.00],    # pelvis
    [-0.13, 0.00, 0.00],   # right hip
    [-0.13, -THIGH, 0.00],  # right knee
    [-0.13, -THIGH - SHANK, 0.00],  # right ankle
    [0.13, 0.00, 0.00],    # left hip
    [0.13, -THIGH, 0.00],  # left knee
    [0.13, -THIGH - SHANK, 0.00],  # left ankle
    [0.00, 0.25, 0.00],    # spine
    [0.00, 0.50, 0.00],    # thorax
    [0.00, 0.60, 0.00],    # neck
    [0.00, 0.72, 0.00],    # head
    [0.20, 0.50, 0.00],    # left shoulder
    [0.25, 0.22, 0.00],    # left elbow
    [0.27, 0.00, 0.05],    # left wrist
    [-0.20, 0.50, 0.00],   # right shoulder
    [-0.25, 0.22, 0.00],   # right elbow
    [-0.27, 0.00, 0.05],   # right wrist
])


@dataclass(frozen=True)
class MotionStyle:
    name: str
    swing_amplitude: float   # thigh swing, radians
    swing_cycles: float      # swing cycles across the clip
    knee_bend: float         # peak extra shank flexion, radians
    pelvis_bob: float        # vertical pelvis oscillation
    arm_swing: float         # arm counter-motion scale


STYLE_WIDE = MotionStyle(name="wide", swing_amplitude=1.05, swing_cycles=1.0,
                         knee_bend=1.2, pelvis_bob=0.05, arm_swing=0.5)
STYLE_COMPACT = MotionStyle(name="compact", swing_amplitude=0.4, swing_cycles=2.0,
                            knee_bend=0.35, pelvis_bob=0.015, arm_swing=0.15)

STYLES = {s.name: s for s in (STYLE_WIDE, STYLE_COMPACT)}


def motion_sequence(style: MotionStyle, rng: np.random.Generator,
                    frames: int = CLIP_FRAMES, noise: float = 0.004) -> np.ndarray:
    """One (frames, 17, 3) right-footed strike in the given style."""
    seq = np.tile(BASE_POSE, (frames, 1, 1))
    hip = BASE_POSE[1]
    phase_offset = rng.uniform(-0.06, 0.06)
    amp = style.swing_amplitude * rng.uniform(0.9, 1.1)
    bend = style.knee_bend * rng.uniform(0.85, 1.15)
    for t in range(frames):
        phase = t / (frames - 1) + phase_offset
        theta = amp * np.sin(2.0 * np.pi * style.swing_cycles * (phase - 0.35))
        kappa = bend * 0.5 * (1.0 - np.cos(2.0 * np.pi * phase))
        thigh_dir = np.array([0.0, -np.cos(theta), np.sin(theta)])
        shank_dir = np.array([0.0, -np.cos(theta - kappa), np.sin(theta - kappa)])
        knee = hip + THIGH * thigh_dir
        ankle = knee + SHANK * shank_dir
        seq[t, 2] = knee
        seq[t, 3] = ankle
        bob = style.pelvis_bob * np.sin(2.0 * np.pi * phase)
        seq[t, :, 1] += bob
        swing = style.arm_swing * 0.12 * np.sin(2.0 * np.pi * style.swing_cycles * phase)
        seq[t, 12, 2] += swing      # left elbow counter-swings the right leg
        seq[t, 13, 2] += 1.6 * swing
        seq[t, 15, 2] -= swing
        seq[t, 16, 2] -= 1.6 * swing
    seq += rng.normal(scale=noise, size=seq.shape)
    return seq


def style_sequences(style: MotionStyle, count: int, seed: int,
                    frames: int = CLIP_FRAMES) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [motion_sequence(style, rng, frames=frames) for _ in range(count)]


def project_to_image(seq3d: np.ndarray) -> np.ndarray:
    """Map 3D poses into a 100 x 100 crop (x right, image y down)."""
    img = np.zeros((seq3d.shape[0], 17, 2))
    img[:, :, 0] = 50.0 + 40.0 * seq3d[:, :, 0]
    img[:, :, 1] = 50.0 - 40.0 * seq3d[:, :, 1]
    return img


def make_clip(clip_id: str, style: MotionStyle, rng: np.random.Generator,
              index: int = 0) -> ShotClip:
    seq3d = motion_sequence(style, rng)
    # Place the player somewhere on a virtual pitch so raw clips carry a
    # translation the normalization has to remove.
    offset = rng.uniform(-2.0, 2.0, size=3)
    seq3d_world = seq3d + offset

    img = project_to_image(seq3d)
    pose2d = [Pose2D(joints=img[t], visible=np.ones(17, dtype=bool))
              for t in range(img.shape[0])]

    shooter_boxes = []
    for t in range(img.shape[0]):
        x0, y0 = img[t].min(axis=0) - 3.0
        x1, y1 = img[t].max(axis=0) + 3.0
        shooter_boxes.append(BoundingBox(frame_index=t, x=float(x0), y=float(y0),
                                         w=float(x1 - x0), h=float(y1 - y0), track_id=1))
    decoy_boxes = [BoundingBox(frame_index=t, x=4.0, y=6.0, w=14.0, h=30.0, track_id=2)
                   for t in range(img.shape[0])]

    return ShotClip(
        clip_id=clip_id,
        match=MatchMeta(league="Synthetic League", date="2025-07-01",
                        half=1 + index % 2, timestamp=f"00:{10 + index:02d}:00"),
        frame_count=seq3d.shape[0],
        joint_map_id="h36m_17",
        tracklets=[Tracklet(track_id=1, boxes=shooter_boxes),
                   Tracklet(track_id=2, boxes=decoy_boxes)],
        shooter_track_id=1,
        pose2d_seq=pose2d,
        pose3d_seq=seq3d_world,
        crops=[CropWindow(frame_index=t, center=(50.0, 50.0), size=(100.0, 100.0))
               for t in range(seq3d.shape[0])],
    )


def generate_dataset(root: str | Path, clips: int = 12, seed: int = 0,
                     split: str = "train") -> Dataset:
    """Write `clips` synthetic clips (styles alternating) under `root`."""
    rng = np.random.default_rng(seed)
    styles = (STYLE_WIDE, STYLE_COMPACT)
    built = []
    for i in range(clips):
        style = styles[i % 2]
        built.append(make_clip(f"synth_{i:03d}_{style.name}", style, rng, index=i))
    dataset = Dataset(clips=built, split=split)
    save_dataset(dataset, root)
    return dataset
