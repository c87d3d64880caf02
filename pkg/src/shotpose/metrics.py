"""Evaluation metrics: keypoint PDJ, detection PR/AP, tracking HOTA,
and tracklet-selection accuracy.

Box inputs are (x, y, w, h) in pixels with a top-left origin; anything
with .x/.y/.w/.h attributes (for example dataset bounding boxes) is
accepted too.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContractError, DegeneratePoseError, ValidationError
from .joints import NUM_JOINTS, JointMap, get_joint_map

log = logging.getLogger(__name__)

DEFAULT_PDJ_THRESHOLDS = np.linspace(0.01, 0.50, 50)
DEFAULT_HOTA_ALPHAS = np.linspace(0.05, 0.95, 19)

_ALPHA_EPS = 1e-9


def _xywh(box) -> tuple[float, float, float, float]:
    if hasattr(box, "x"):
        return (float(box.x), float(box.y), float(box.w), float(box.h))
    x, y, w, h = box
    return (float(x), float(y), float(w), float(h))


def iou(a, b) -> float:
    """Intersection over union of two axis-aligned boxes."""
    ax, ay, aw, ah = _xywh(a)
    bx, by, bw, bh = _xywh(b)
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise ContractError("boxes must have positive extents")
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


# -- PDJ ---------------------------------------------------------------------


@dataclass
class PdjResult:
    detected: list          # per joint: True/False, or None when skipped
    mean: float
    torso_norm: float


def _torso_norm(joint_map: JointMap, gt_joints: np.ndarray, gt_visible: np.ndarray) -> float:
    for role in ("left_shoulder", "right_shoulder", "left_hip", "right_hip"):
        if not joint_map.role_visible(gt_visible, role):
            raise DegeneratePoseError(f"ground-truth {role} not visible; "
                                      "torso normalization undefined")
    norm = joint_map.torso_length(gt_joints)
    if norm < 1e-9:
        raise DegeneratePoseError(f"torso length {norm} is degenerate")
    return norm


def pdj(pred, gt, threshold: float, joint_map: JointMap | str = "h36m_17") -> PdjResult:
    """Percent of detected joints for one pose pair.

    A joint counts as detected when its error, divided by the ground-truth
    shoulder-center to hip-center distance, is strictly under `threshold`.
    Joints invisible in the ground truth are excluded from the mean.
    """
    if isinstance(joint_map, str):
        joint_map = get_joint_map(joint_map)
    pred_joints = np.asarray(pred.joints if hasattr(pred, "joints") else pred, dtype=np.float64)
    gt_joints = np.asarray(gt.joints if hasattr(gt, "joints") else gt, dtype=np.float64)
    gt_visible = np.asarray(gt.visible, dtype=bool) if hasattr(gt, "visible") \
        else np.ones(NUM_JOINTS, dtype=bool)
    if pred_joints.shape != gt_joints.shape or pred_joints.shape[0] != NUM_JOINTS:
        raise ContractError(
            f"pose shapes disagree: {pred_joints.shape} vs {gt_joints.shape}")

    norm = _torso_norm(joint_map, gt_joints, gt_visible)
    dists = np.linalg.norm(pred_joints - gt_joints, axis=1) / norm
    detected: list = []
    hits = total = 0
    for j in range(NUM_JOINTS):
        if not gt_visible[j]:
            detected.append(None)
            continue
        hit = bool(dists[j] < threshold)
        detected.append(hit)
        hits += hit
        total += 1
    mean = hits / total if total else float("nan")
    return PdjResult(detected=detected, mean=mean, torso_norm=norm)


def pdj_curve(pairs, thresholds=None, joint_map: JointMap | str = "h36m_17") -> np.ndarray:
    """Pooled detection rate at each threshold over (pred, gt) pose pairs."""
    if isinstance(joint_map, str):
        joint_map = get_joint_map(joint_map)
    thresholds = DEFAULT_PDJ_THRESHOLDS if thresholds is None else np.asarray(thresholds)
    if not pairs:
        raise ContractError("pdj_curve needs at least one pose pair")
    hits = np.zeros(len(thresholds))
    total = 0
    for pred, gt in pairs:
        pred_joints = np.asarray(pred.joints if hasattr(pred, "joints") else pred)
        gt_joints = np.asarray(gt.joints if hasattr(gt, "joints") else gt)
        gt_visible = np.asarray(gt.visible, dtype=bool) if hasattr(gt, "visible") \
            else np.ones(NUM_JOINTS, dtype=bool)
        norm = _torso_norm(joint_map, gt_joints, gt_visible)
        dists = np.linalg.norm(pred_joints - gt_joints, axis=1)[gt_visible] / norm
        total += dists.size
        hits += (dists[None, :] < thresholds[:, None]).sum(axis=1)
    if total == 0:
        raise ContractError("no visible ground-truth joints across the pairs")
    return hits / total


def pdj_auc(pairs, thresholds=None, joint_map: JointMap | str = "h36m_17") -> tuple[float, np.ndarray]:
    """Trapezoidal area under the PDJ curve, normalized by the threshold span."""
    thresholds = DEFAULT_PDJ_THRESHOLDS if thresholds is None else np.asarray(thresholds)
    curve = pdj_curve(pairs, thresholds, joint_map)
    span = thresholds[-1] - thresholds[0]
    area = float(np.sum((curve[1:] + curve[:-1]) * np.diff(thresholds)) / 2.0 / span)
    return area, curve


def pdj_by_group(pairs, threshold: float,
                 joint_map: JointMap | str = "h36m_17") -> dict[str, float | None]:
    """Pooled PDJ at one threshold for each body-part group of the joint map."""
    if isinstance(joint_map, str):
        joint_map = get_joint_map(joint_map)
    hits = {name: 0 for name in joint_map.pdj_groups}
    totals = {name: 0 for name in joint_map.pdj_groups}
    for pred, gt in pairs:
        result = pdj(pred, gt, threshold, joint_map)
        for name, members in joint_map.pdj_groups.items():
            for j in members:
                if result.detected[j] is None:
                    continue
                hits[name] += result.detected[j]
                totals[name] += 1
    return {name: (hits[name] / totals[name] if totals[name] else None)
            for name in joint_map.pdj_groups}


# -- detection precision/recall/AP ---------------------------------------------


@dataclass
class ScoredBox:
    box: tuple
    confidence: float

    def __post_init__(self):
        self.box = _xywh(self.box)
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]",
                                  field="confidence")


@dataclass
class DetectionSet:
    gt: dict[int, list] = field(default_factory=dict)       # frame -> [xywh]
    preds: dict[int, list[ScoredBox]] = field(default_factory=dict)

    def __post_init__(self):
        self.gt = {int(f): [_xywh(b) for b in boxes] for f, boxes in self.gt.items()}
        self.preds = {int(f): [b if isinstance(b, ScoredBox) else ScoredBox(*b)
                               for b in boxes]
                      for f, boxes in self.preds.items()}


@dataclass
class DetectionPrAp:
    precision: float
    recall: float
    ap: float
    true_positives: int
    false_positives: int
    num_gt: int
    no_predictions: bool = False


def _ap_from_curve(recalls: np.ndarray, precisions: np.ndarray) -> float:
    """All-point interpolation: area under the precision envelope."""
    r = np.concatenate(([0.0], recalls, [1.0]))
    p = np.concatenate(([0.0], precisions, [0.0]))
    for i in range(p.size - 1, 0, -1):
        p[i - 1] = max(p[i - 1], p[i])
    changed = np.where(r[1:] != r[:-1])[0]
    return float(np.sum((r[changed + 1] - r[changed]) * p[changed + 1]))


def detection_pr_ap(detections: DetectionSet, iou_threshold: float = 0.5) -> DetectionPrAp:
    """Greedy confidence-descending matching, one prediction per ground truth."""
    num_gt = sum(len(b) for b in detections.gt.values())
    flat = []
    for frame in sorted(detections.preds):
        for idx, scored in enumerate(detections.preds[frame]):
            flat.append((scored.confidence, frame, idx, scored.box))
    flat.sort(key=lambda item: (-item[0], item[1], item[2]))

    if not flat:
        return DetectionPrAp(precision=0.0, recall=0.0, ap=0.0, true_positives=0,
                             false_positives=0, num_gt=num_gt, no_predictions=True)

    matched: dict[int, set] = {f: set() for f in detections.gt}
    tp_flags = np.zeros(len(flat))
    for rank, (_conf, frame, _idx, box) in enumerate(flat):
        best_iou = 0.0
        best_gt = None
        for gi, gt_box in enumerate(detections.gt.get(frame, [])):
            if gi in matched.get(frame, set()):
                continue
            overlap = iou(box, gt_box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou = overlap
                best_gt = gi
        if best_gt is not None:
            matched[frame].add(best_gt)
            tp_flags[rank] = 1.0

    tp_cum = np.cumsum(tp_flags)
    fp_cum = np.cumsum(1.0 - tp_flags)
    recalls = tp_cum / num_gt if num_gt else np.zeros_like(tp_cum)
    precisions = tp_cum / np.maximum(tp_cum + fp_cum, 1e-12)

    tp = int(tp_cum[-1])
    fp = int(fp_cum[-1])
    return DetectionPrAp(
        precision=tp / (tp + fp) if tp + fp else 0.0,
        recall=tp / num_gt if num_gt else 0.0,
        ap=_ap_from_curve(recalls, precisions) if num_gt else 0.0,
        true_positives=tp,
        false_positives=fp,
        num_gt=num_gt,
    )


# -- HOTA -----------------------------------------------------------------------


@dataclass
class TrackSet:
    """Per-frame mapping of track identity to box."""

    frames: dict[int, dict[int, tuple]] = field(default_factory=dict)

    def __post_init__(self):
        self.frames = {int(f): {int(i): _xywh(b) for i, b in ids.items()}
                       for f, ids in self.frames.items()}

    @classmethod
    def from_tracklets(cls, tracklets) -> "TrackSet":
        """Build from (track_id, boxes) pairs; boxes carry frame_index."""
        frames: dict[int, dict[int, tuple]] = {}
        for track_id, boxes in tracklets:
            for box in boxes:
                frame = int(box.frame_index)
                per_frame = frames.setdefault(frame, {})
                if int(track_id) in per_frame:
                    raise ValidationError(
                        f"track {track_id} appears twice in frame {frame}",
                        field="tracklets")
                per_frame[int(track_id)] = _xywh(box)
        return cls(frames=frames)

    def num_detections(self) -> int:
        return sum(len(ids) for ids in self.frames.values())


@dataclass
class HotaResult:
    alphas: np.ndarray
    hota_curve: np.ndarray
    deta_curve: np.ndarray
    assa_curve: np.ndarray
    tp: np.ndarray
    fn: np.ndarray
    fp: np.ndarray

    @property
    def hota(self) -> float:
        return float(self.hota_curve.mean())

    @property
    def deta(self) -> float:
        return float(self.deta_curve.mean())

    @property
    def assa(self) -> float:
        return float(self.assa_curve.mean())


def hota(gt: TrackSet, pred: TrackSet, alphas=None) -> HotaResult:
    """Higher-order tracking accuracy with its detection/association parts.

    Detections are matched per frame by Hungarian assignment on a global
    alignment score (temporal co-occurrence weighted by IoU), then scored
    at each IoU threshold alpha. A matched pair's association score is
    its matched-frame count divided by the number of frames where either
    identity appears, so a clean half-clip identity swap scores 50%.
    """
    alphas = DEFAULT_HOTA_ALPHAS if alphas is None else np.asarray(alphas, dtype=np.float64)
    gt_ids = sorted({i for ids in gt.frames.values() for i in ids})
    pred_ids = sorted({i for ids in pred.frames.values() for i in ids})
    n_g, n_p = len(gt_ids), len(pred_ids)
    n_alpha = len(alphas)
    total_gt = gt.num_detections()
    total_pred = pred.num_detections()

    if total_gt == 0 and total_pred == 0:
        ones = np.ones(n_alpha)
        zeros = np.zeros(n_alpha)
        return HotaResult(alphas=alphas, hota_curve=ones, deta_curve=ones,
                          assa_curve=ones, tp=zeros, fn=zeros, fp=zeros)
    if total_gt == 0 or total_pred == 0:
        zeros = np.zeros(n_alpha)
        return HotaResult(alphas=alphas, hota_curve=zeros, deta_curve=zeros,
                          assa_curve=zeros, tp=zeros,
                          fn=np.full(n_alpha, float(total_gt)),
                          fp=np.full(n_alpha, float(total_pred)))

    g_index = {i: k for k, i in enumerate(gt_ids)}
    p_index = {i: k for k, i in enumerate(pred_ids)}
    frames = sorted(set(gt.frames) | set(pred.frames))

    # Pass 1: soft potential matches and per-identity frame counts.
    potential = np.zeros((n_g, n_p))
    co_occurs = np.zeros((n_g, n_p))
    gt_count = np.zeros(n_g)
    pred_count = np.zeros(n_p)
    per_frame = []
    for t in frames:
        g_items = sorted(gt.frames.get(t, {}).items())
        p_items = sorted(pred.frames.get(t, {}).items())
        rows = np.array([g_index[i] for i, _ in g_items], dtype=int)
        cols = np.array([p_index[i] for i, _ in p_items], dtype=int)
        gt_count[rows] += 1
        pred_count[cols] += 1
        if rows.size and cols.size:
            co_occurs[np.ix_(rows, cols)] += 1
        sim = np.zeros((rows.size, cols.size))
        for a, (_gi, g_box) in enumerate(g_items):
            for b, (_pi, p_box) in enumerate(p_items):
                sim[a, b] = iou(g_box, p_box)
        per_frame.append((rows, cols, sim))
        if rows.size and cols.size:
            denom = sim.sum(axis=0)[None, :] + sim.sum(axis=1)[:, None] - sim
            soft = np.divide(sim, denom, out=np.zeros_like(sim), where=denom > 1e-12)
            potential[np.ix_(rows, cols)] += soft

    align_denom = gt_count[:, None] + pred_count[None, :] - potential
    global_align = np.divide(potential, align_denom,
                             out=np.zeros_like(potential), where=align_denom > 1e-12)
    frame_union = gt_count[:, None] + pred_count[None, :] - co_occurs

    # Pass 2: per-frame optimal matching on the global alignment score.
    matched_counts = [np.zeros((n_g, n_p)) for _ in range(n_alpha)]
    tp = np.zeros(n_alpha)
    for rows, cols, sim in per_frame:
        if rows.size == 0 or cols.size == 0:
            continue
        score = global_align[np.ix_(rows, cols)] * sim
        match_r, match_c = linear_sum_assignment(-score)
        for r, c in zip(match_r, match_c):
            overlap = sim[r, c]
            if overlap <= 0.0:
                continue
            gi, pj = rows[r], cols[c]
            for a, alpha in enumerate(alphas):
                if overlap >= alpha - _ALPHA_EPS:
                    matched_counts[a][gi, pj] += 1
                    tp[a] += 1

    fn = total_gt - tp
    fp = total_pred - tp
    deta = tp / (tp + fn + fp)
    assa = np.zeros(n_alpha)
    for a in range(n_alpha):
        if tp[a] > 0:
            m = matched_counts[a]
            assa[a] = float(np.sum(m * m / frame_union) / tp[a])
    return HotaResult(alphas=alphas, hota_curve=np.sqrt(deta * assa),
                      deta_curve=deta, assa_curve=assa, tp=tp, fn=fn, fp=fp)


# -- tracklet selection -----------------------------------------------------------


@dataclass
class TrackletScore:
    track_id: int
    score: float
    is_shooter: bool

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score {self.score} outside [0, 1]", field="score")


@dataclass
class ClipScores:
    clip_id: str
    tracklets: list[TrackletScore]

    def __post_init__(self):
        shooters = sum(t.is_shooter for t in self.tracklets)
        if self.tracklets and shooters != 1:
            raise ValidationError(f"expected exactly one shooter, found {shooters}",
                                  field="is_shooter", clip_id=self.clip_id)


@dataclass
class SelectionMetrics:
    precision: float
    recall: float
    accuracy: float
    clip_accuracy: float
    num_clips: int
    num_tracklets: int
    skipped_clips: list[str] = field(default_factory=list)


def selection_metrics(clips: list[ClipScores], decision_threshold: float = 0.5) -> SelectionMetrics:
    """Tracklet-level classification metrics plus per-clip argmax accuracy.

    CLIP accuracy counts a clip correct when the highest-scored tracklet
    (ties broken by lowest track id) is the labeled shooter.
    """
    tp = fp = tn = fn = 0
    clip_hits = 0
    used_clips = 0
    skipped = []
    for clip in clips:
        if not clip.tracklets:
            log.warning("clip %s has no tracklets; excluded", clip.clip_id)
            skipped.append(clip.clip_id)
            continue
        used_clips += 1
        for t in clip.tracklets:
            predicted = t.score >= decision_threshold
            if predicted and t.is_shooter:
                tp += 1
            elif predicted:
                fp += 1
            elif t.is_shooter:
                fn += 1
            else:
                tn += 1
        best = min(clip.tracklets, key=lambda t: (-t.score, t.track_id))
        clip_hits += best.is_shooter
    if used_clips == 0:
        raise ContractError("selection_metrics needs at least one clip with tracklets")
    total = tp + fp + tn + fn
    return SelectionMetrics(
        precision=tp / (tp + fp) if tp + fp else 0.0,
        recall=tp / (tp + fn) if tp + fn else 0.0,
        accuracy=(tp + tn) / total,
        clip_accuracy=clip_hits / used_clips,
        num_clips=used_clips,
        num_tracklets=total,
        skipped_clips=skipped,
    )
