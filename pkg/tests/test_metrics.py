import numpy as np
import pytest

from shotpose.dataset import Pose2D
from shotpose.errors import ContractError, DegeneratePoseError, ValidationError
from shotpose.joints import COCO_17, H36M_17
from shotpose.metrics import (
    ClipScores, DetectionSet, ScoredBox, TrackSet, TrackletScore,
    detection_pr_ap, hota, iou, pdj, pdj_auc, pdj_by_group, pdj_curve,
    selection_metrics,
)

from oracles import box_iou, hota_reference, trapezoid


# -- IoU -----------------------------------------------------------------


def test_iou_identity_disjoint_half_overlap():
    unit = (0.0, 0.0, 1.0, 1.0)
    assert iou(unit, unit) == 1.0
    assert iou(unit, (5.0, 5.0, 1.0, 1.0)) == 0.0
    assert iou(unit, (0.5, 0.0, 1.0, 1.0)) == pytest.approx(1.0 / 3.0)


def test_iou_matches_area_arithmetic_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = (*rng.uniform(0, 10, 2), *rng.uniform(0.5, 6, 2))
        b = (*rng.uniform(0, 10, 2), *rng.uniform(0.5, 6, 2))
        assert abs(iou(a, b) - box_iou(a, b)) < 1e-12
        assert 0.0 <= iou(a, b) <= 1.0


def test_iou_rejects_degenerate_box():
    with pytest.raises(ContractError):
        iou((0, 0, 0, 1), (0, 0, 1, 1))


# -- PDJ -----------------------------------------------------------------


def upright_gt(visible=None):
    joints = np.zeros((17, 2))
    joints[H36M_17.roles["left_shoulder"][0]] = [2.0, 10.0]
    joints[H36M_17.roles["right_shoulder"][0]] = [-2.0, 10.0]
    joints[H36M_17.roles["left_hip"][0]] = [1.0, 0.0]
    joints[H36M_17.roles["right_hip"][0]] = [-1.0, 0.0]
    for j in range(17):
        if not joints[j].any():
            joints[j] = [0.5 * j, 3.0 + j]
    vis = np.ones(17, dtype=bool) if visible is None else visible
    return Pose2D(joints=joints, visible=vis)


def test_pdj_perfect_prediction():
    gt = upright_gt()
    result = pdj(gt.joints.copy(), gt, threshold=0.05)
    assert result.mean == 1.0
    assert all(result.detected)
    assert result.torso_norm == pytest.approx(10.0)


def test_pdj_boundary_is_strict():
    gt = upright_gt()
    pred = gt.joints.copy()
    pred[5] += np.array([0.5 * result_norm(gt), 0.0])
    result = pdj(pred, gt, threshold=0.5)
    assert result.detected[5] is False
    assert result.mean == pytest.approx(16 / 17)


def result_norm(gt):
    return H36M_17.torso_length(gt.joints)


def test_pdj_skips_invisible_joints():
    vis = np.ones(17, dtype=bool)
    vis[10] = False
    gt = upright_gt(visible=vis)
    pred = gt.joints.copy()
    pred[10] += 1e6   # wildly wrong but invisible, so ignored
    result = pdj(pred, gt, threshold=0.5)
    assert result.detected[10] is None
    assert result.mean == 1.0


def test_pdj_requires_visible_torso():
    vis = np.ones(17, dtype=bool)
    vis[H36M_17.roles["left_hip"][0]] = False
    gt = upright_gt(visible=vis)
    with pytest.raises(DegeneratePoseError):
        pdj(gt.joints.copy(), gt, threshold=0.5)


def test_pdj_degenerate_torso():
    gt = Pose2D(joints=np.zeros((17, 2)), visible=np.ones(17, dtype=bool))
    with pytest.raises(DegeneratePoseError):
        pdj(np.zeros((17, 2)), gt, threshold=0.5)


def test_pdj_matches_per_joint_recomputation():
    rng = np.random.default_rng(1)
    for _ in range(100):
        gt = upright_gt(visible=rng.uniform(size=17) > 0.15)
        if not all(gt.visible[[1, 4, 11, 14]]):
            continue
        pred = gt.joints + rng.normal(scale=3.0, size=(17, 2))
        threshold = float(rng.uniform(0.05, 0.6))
        result = pdj(pred, gt, threshold)
        norm = result_norm(gt)
        hits = total = 0
        for j in range(17):
            if not gt.visible[j]:
                assert result.detected[j] is None
                continue
            dist = float(np.hypot(*(pred[j] - gt.joints[j])))
            expected = dist / norm < threshold
            assert result.detected[j] == expected
            hits += expected
            total += 1
        assert result.mean == pytest.approx(hits / total)


def test_pdj_monotone_in_threshold():
    rng = np.random.default_rng(2)
    gt = upright_gt()
    pred = gt.joints + rng.normal(scale=2.0, size=(17, 2))
    thresholds = np.linspace(0.01, 1.0, 25)
    means = [pdj(pred, gt, t).mean for t in thresholds]
    assert all(b >= a for a, b in zip(means, means[1:]))


def test_pdj_auc_perfect_and_hopeless():
    gt = upright_gt()
    perfect, curve = pdj_auc([(gt.joints.copy(), gt)])
    assert perfect == pytest.approx(1.0)
    assert np.all(curve == 1.0)
    far = gt.joints + 1e5
    hopeless, curve = pdj_auc([(far, gt)])
    assert hopeless == 0.0
    assert not curve.any()


def test_pdj_auc_matches_trapezoid_oracle():
    rng = np.random.default_rng(3)
    pairs = []
    for _ in range(6):
        gt = upright_gt()
        pairs.append((gt.joints + rng.normal(scale=2.5, size=(17, 2)), gt))
    thresholds = np.linspace(0.01, 0.50, 50)
    auc, curve = pdj_auc(pairs, thresholds)
    expected = trapezoid(list(curve), list(thresholds)) / (0.50 - 0.01)
    assert auc == pytest.approx(expected, abs=1e-12)


def test_pdj_linear_degradation_closed_form():
    # One joint displaced by t*norm for increasing t: the curve is a step
    # per joint and the trapezoid area has a closed form.
    gt = upright_gt()
    pred = gt.joints.copy()
    norm = result_norm(gt)
    # Displace joints 0..9 by (0.053 + 0.05*j) * norm, safely between the
    # threshold grid points; the rest are exact.
    for j in range(10):
        pred[j] += np.array([norm * (0.053 + 0.05 * j), 0.0])
    thresholds = np.linspace(0.01, 0.50, 50)
    auc, curve = pdj_auc([(pred, gt)], thresholds)
    manual_curve = []
    for t in thresholds:
        hits = 7  # joints 10..16 are exact
        for j in range(10):
            hits += (0.053 + 0.05 * j) < t
        manual_curve.append(hits / 17)
    assert np.allclose(curve, manual_curve)
    assert auc == pytest.approx(trapezoid(manual_curve, list(thresholds)) / 0.49)


def test_pdj_by_group_pools_and_handles_empty_group():
    gt = upright_gt()
    pred = gt.joints.copy()
    groups = pdj_by_group([(pred, gt)], threshold=0.5, joint_map=H36M_17)
    assert set(groups) == {"Head", "Shoulder", "Elbow", "Wrist", "Body", "Hip", "Knee", "Ankle"}
    assert all(v == 1.0 for v in groups.values())

    coco_gt = Pose2D(joints=np.arange(34, dtype=float).reshape(17, 2),
                     visible=np.ones(17, dtype=bool))
    coco_groups = pdj_by_group([(coco_gt.joints.copy(), coco_gt)], 0.5, COCO_17)
    assert coco_groups["Body"] is None
    assert coco_groups["Ankle"] == 1.0


# -- detection PR / AP ------------------------------------------------------


def test_detection_perfect():
    gt = {0: [(0, 0, 10, 10)], 1: [(5, 5, 4, 4)]}
    preds = {0: [ScoredBox((0, 0, 10, 10), 1.0)], 1: [ScoredBox((5, 5, 4, 4), 1.0)]}
    result = detection_pr_ap(DetectionSet(gt=gt, preds=preds))
    assert result.precision == result.recall == result.ap == 1.0


def test_detection_no_predictions_policy():
    result = detection_pr_ap(DetectionSet(gt={0: [(0, 0, 5, 5)]}, preds={}))
    assert result.no_predictions
    assert result.precision == 0.0 and result.recall == 0.0 and result.ap == 0.0


def test_detection_hand_constructed_staircase():
    # Two ground truths in frame 0, one in frame 1 (missed). Predictions:
    # exact hit (0.9), duplicate of the same object (0.8), hit on the other
    # object (0.7), stray box (0.6). Hand-computed staircase gives AP 5/9.
    gt = {0: [(0, 0, 10, 10), (20, 0, 10, 10)], 1: [(0, 0, 10, 10)]}
    preds = {0: [
        ScoredBox((0, 0, 10, 10), 0.9),
        ScoredBox((0.5, 0, 10, 10), 0.8),
        ScoredBox((20, 0, 10, 10), 0.7),
        ScoredBox((40, 40, 5, 5), 0.6),
    ]}
    result = detection_pr_ap(DetectionSet(gt=gt, preds=preds))
    assert result.true_positives == 2
    assert result.false_positives == 2
    assert result.precision == pytest.approx(0.5)
    assert result.recall == pytest.approx(2 / 3)
    assert result.ap == pytest.approx(5 / 9)


def test_detection_ap_in_unit_interval_random():
    rng = np.random.default_rng(4)
    for _ in range(50):
        gt = {f: [(*rng.uniform(0, 30, 2), *rng.uniform(2, 8, 2))
                  for _ in range(rng.integers(0, 4))]
              for f in range(3)}
        preds = {f: [ScoredBox((*rng.uniform(0, 30, 2), *rng.uniform(2, 8, 2)),
                               float(rng.uniform()))
                     for _ in range(rng.integers(0, 4))]
                 for f in range(3)}
        if not any(gt.values()) and not any(preds.values()):
            continue
        result = detection_pr_ap(DetectionSet(gt=gt, preds=preds))
        assert 0.0 <= result.ap <= 1.0
        assert 0.0 <= result.precision <= 1.0
        assert 0.0 <= result.recall <= 1.0


def test_detection_confidence_out_of_range():
    with pytest.raises(ValidationError):
        ScoredBox((0, 0, 1, 1), 1.5)


# -- HOTA --------------------------------------------------------------------


def tracks_from(frames):
    return TrackSet(frames=frames)


def test_hota_identity_case():
    frames = {t: {1: (0, 0, 5, 5), 2: (20, 0, 5, 5)} for t in range(4)}
    result = hota(tracks_from(frames), tracks_from(frames))
    assert result.hota == pytest.approx(1.0)
    assert result.deta == pytest.approx(1.0)
    assert result.assa == pytest.approx(1.0)


def test_hota_half_swap_case():
    # Two targets tracked with perfect boxes, but predicted identities swap
    # at the halfway point of 4 frames.
    box_a = {t: (0.0, 0.0, 5.0, 5.0) for t in range(4)}
    box_b = {t: (50.0, 0.0, 5.0, 5.0) for t in range(4)}
    gt = {t: {1: box_a[t], 2: box_b[t]} for t in range(4)}
    pred = {t: ({1: box_a[t], 2: box_b[t]} if t < 2 else {1: box_b[t], 2: box_a[t]})
            for t in range(4)}
    result = hota(tracks_from(gt), tracks_from(pred))
    assert result.deta == pytest.approx(1.0, abs=1e-9)
    assert result.assa == pytest.approx(0.5, abs=1e-9)
    assert result.hota == pytest.approx(np.sqrt(0.5), abs=1e-9)


def test_hota_empty_cases():
    frames = {0: {1: (0, 0, 5, 5)}}
    empty = TrackSet(frames={})
    both = hota(empty, empty)
    assert both.hota == 1.0
    miss = hota(tracks_from(frames), empty)
    assert miss.hota == 0.0 and miss.fn[0] == 1
    ghost = hota(empty, tracks_from(frames))
    assert ghost.hota == 0.0 and ghost.fp[0] == 1


def random_track_instance(rng):
    """A small tracking scenario: up to 3 tracks, up to 5 frames."""
    n_frames = int(rng.integers(2, 6))
    n_gt = int(rng.integers(1, 4))
    n_pred = int(rng.integers(1, 4))
    gt_frames: dict = {t: {} for t in range(n_frames)}
    pred_frames: dict = {t: {} for t in range(n_frames)}
    gt_tracks = {}
    for g in range(1, n_gt + 1):
        base = rng.uniform(0, 25, size=2)
        size = rng.uniform(3, 8, size=2)
        drift = rng.uniform(-2, 2, size=2)
        gt_tracks[g] = (base, size, drift)
        for t in range(n_frames):
            if rng.uniform() < 0.85:
                pos = base + drift * t
                gt_frames[t][g] = (float(pos[0]), float(pos[1]),
                                   float(size[0]), float(size[1]))
    mimic = rng.uniform() < 0.6
    for p in range(1, n_pred + 1):
        if mimic and p in gt_tracks:
            base, size, drift = gt_tracks[p]
            base = base + rng.normal(scale=1.5, size=2)
        else:
            base = rng.uniform(0, 25, size=2)
            size = rng.uniform(3, 8, size=2)
            drift = rng.uniform(-2, 2, size=2)
        for t in range(n_frames):
            if rng.uniform() < 0.85:
                pos = base + drift * t
                pred_frames[t][p] = (float(pos[0] + rng.normal(scale=0.5)),
                                     float(pos[1] + rng.normal(scale=0.5)),
                                     float(size[0]), float(size[1]))
    gt_frames = {t: ids for t, ids in gt_frames.items() if ids}
    pred_frames = {t: ids for t, ids in pred_frames.items() if ids}
    return gt_frames, pred_frames


def test_hota_matches_exhaustive_bijection_oracle():
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(120):
        gt_frames, pred_frames = random_track_instance(rng)
        if not gt_frames and not pred_frames:
            continue
        checked += 1
        result = hota(tracks_from(gt_frames), tracks_from(pred_frames))
        ref_hota, ref_deta, ref_assa = hota_reference(gt_frames, pred_frames,
                                                      list(result.alphas))
        np.testing.assert_allclose(result.deta_curve, ref_deta, atol=1e-9)
        np.testing.assert_allclose(result.assa_curve, ref_assa, atol=1e-9)
        np.testing.assert_allclose(result.hota_curve, ref_hota, atol=1e-9)
    assert checked >= 100


def test_hota_swap_symmetry():
    rng = np.random.default_rng(6)
    for _ in range(20):
        gt_frames, pred_frames = random_track_instance(rng)
        forward = hota(tracks_from(gt_frames), tracks_from(pred_frames))
        backward = hota(tracks_from(pred_frames), tracks_from(gt_frames))
        np.testing.assert_allclose(forward.deta_curve, backward.deta_curve, atol=1e-12)
        np.testing.assert_allclose(forward.fn, backward.fp, atol=0)
        np.testing.assert_allclose(forward.fp, backward.fn, atol=0)


def test_trackset_rejects_duplicate_identity_in_frame():
    class Box:
        def __init__(self, f):
            self.frame_index = f
            self.x, self.y, self.w, self.h = 0.0, 0.0, 2.0, 2.0

    with pytest.raises(ValidationError):
        TrackSet.from_tracklets([(1, [Box(0)]), (1, [Box(0)])])


# -- tracklet selection --------------------------------------------------------


def clip(clip_id, entries):
    return ClipScores(clip_id=clip_id,
                      tracklets=[TrackletScore(track_id=t, score=s, is_shooter=lab)
                                 for t, s, lab in entries])


def test_selection_shooter_always_on_top():
    clips = [clip(f"c{i}", [(1, 0.9, True), (2, 0.3, False), (3, 0.1, False)])
             for i in range(5)]
    result = selection_metrics(clips)
    assert result.clip_accuracy == 1.0
    assert result.precision == 1.0
    assert result.recall == 1.0


def test_selection_uniform_scores_tie_rule():
    # All scores equal: the argmax must fall to the lowest track id, which
    # is not the shooter here, so CLIP accuracy is zero.
    result = selection_metrics([clip("c0", [(4, 0.5, False), (7, 0.5, True),
                                            (9, 0.5, False), (11, 0.5, False)])])
    assert result.clip_accuracy == 0.0


def test_selection_matches_bruteforce_argmax_scan():
    rng = np.random.default_rng(7)
    clips = []
    expected_hits = 0
    total_tracklets = 0
    threshold = 0.5
    tp = fp = tn = fn = 0
    for i in range(50):
        n = int(rng.integers(1, 6))
        shooter = int(rng.integers(n))
        entries = []
        for t in range(n):
            entries.append((t + 1, float(np.round(rng.uniform(), 3)), t == shooter))
        clips.append(clip(f"c{i}", entries))
        best_idx = 0
        for t in range(1, n):
            if entries[t][1] > entries[best_idx][1]:
                best_idx = t
        expected_hits += entries[best_idx][2]
        for _tid, score, is_shooter in entries:
            total_tracklets += 1
            predicted = score >= threshold
            tp += predicted and is_shooter
            fp += predicted and not is_shooter
            fn += (not predicted) and is_shooter
            tn += (not predicted) and not is_shooter
    result = selection_metrics(clips, decision_threshold=threshold)
    assert result.clip_accuracy == pytest.approx(expected_hits / 50)
    assert result.accuracy == pytest.approx((tp + tn) / total_tracklets)
    assert result.precision == pytest.approx(tp / (tp + fp) if tp + fp else 0.0)
    assert result.recall == pytest.approx(tp / (tp + fn) if tp + fn else 0.0)


def test_selection_clip_acc_invariant_under_monotone_rescoring():
    rng = np.random.default_rng(8)
    clips = []
    for i in range(20):
        n = int(rng.integers(2, 5))
        shooter = int(rng.integers(n))
        entries = [(t + 1, float(rng.uniform()), t == shooter) for t in range(n)]
        clips.append(clip(f"c{i}", entries))
    base = selection_metrics(clips).clip_accuracy
    squared = [clip(c.clip_id, [(t.track_id, t.score ** 2, t.is_shooter)
                                for t in c.tracklets]) for c in clips]
    assert selection_metrics(squared).clip_accuracy == base


def test_selection_validations():
    with pytest.raises(ValidationError):
        clip("c0", [(1, 0.5, False), (2, 0.5, False)])   # no shooter
    with pytest.raises(ValidationError):
        clip("c0", [(1, 1.5, True)])                     # score out of range
    with pytest.raises(ContractError):
        selection_metrics([ClipScores(clip_id="empty", tracklets=[])])


def test_selection_skips_empty_clips(caplog):
    clips = [ClipScores(clip_id="empty", tracklets=[]),
             clip("full", [(1, 0.9, True), (2, 0.2, False)])]
    with caplog.at_level("WARNING"):
        result = selection_metrics(clips)
    assert result.skipped_clips == ["empty"]
    assert result.num_clips == 1
