"""Scoring math on small hand-built annotations."""

import math

import numpy as np
import pytest

from poseforge.codec import JOINT_NAMES, NUM_JOINTS, ImageAnnotation, PersonAnnotation
from poseforge.metrics import (
    MetricReport,
    evaluate,
    head_size,
    match_persons,
    metric_alpha,
    reference_size,
    score_pair,
    torso_size,
)

L_SHOULDER, R_HIP = 13, 2


def make_person(cx=0.0, cy=0.0, invisible=(), headbox=(0.0, 0.0, 6.0, 8.0)):
    """Joints on a 4x4 grid, 10 px apart, anchored at (cx, cy)."""
    joints = np.zeros((NUM_JOINTS, 3))
    for j in range(NUM_JOINTS):
        joints[j] = (cx + 10.0 * (j % 4), cy + 10.0 * (j // 4), 1.0)
    for j in invisible:
        joints[j, 2] = 0.0
    hb = None if headbox is None else np.asarray(headbox) + (cx, cy, cx, cy)
    return PersonAnnotation(joints=joints, headbox=hb)


def preds_for(person, dx=0.0, dy=0.0, drop=()):
    out = []
    for j in range(NUM_JOINTS):
        if j in drop:
            out.append(None)
        else:
            out.append((person.joints[j, 0] + dx, person.joints[j, 1] + dy, 1.0))
    return out


def test_head_size_is_point_six_of_diagonal():
    p = make_person()   # 6-8-10 box
    assert head_size(p) == pytest.approx(6.0)
    assert head_size(make_person(headbox=None)) is None


def test_torso_size_shoulder_to_hip():
    p = make_person()
    a, b = p.joints[L_SHOULDER], p.joints[R_HIP]
    assert torso_size(p) == pytest.approx(math.hypot(a[0] - b[0], a[1] - b[1]))
    assert torso_size(make_person(invisible=(R_HIP,))) is None


def test_reference_size_dispatch():
    p = make_person()
    assert reference_size(p, "pckh") == head_size(p)
    assert reference_size(p, "pck@0.2") == torso_size(p)
    with pytest.raises(ValueError):
        reference_size(p, "oks")


def test_default_alphas():
    assert metric_alpha("pckh", None) == 0.5
    assert metric_alpha("pck@0.2", None) == 0.2
    assert metric_alpha("pckh", 0.1) == 0.1


def test_score_pair_threshold_boundary():
    gt = make_person()
    preds = preds_for(gt)
    preds[0] = (gt.joints[0, 0] + 4.0, gt.joints[0, 1], 1.0)
    preds[1] = (gt.joints[1, 0] + 5.0, gt.joints[1, 1], 1.0)
    preds[2] = (gt.joints[2, 0] + 6.0, gt.joints[2, 1], 1.0)
    correct, mean = score_pair(preds, gt, threshold=5.0)
    assert correct[0] is True          # inside
    assert correct[1] is True          # exactly on the threshold
    assert correct[2] is False         # outside
    assert mean == pytest.approx(15.0 / NUM_JOINTS)


def test_score_pair_skips_invisible():
    gt = make_person(invisible=(3, 7))
    preds = preds_for(gt, dx=100.0)    # grossly wrong everywhere
    correct, mean = score_pair(preds, gt, threshold=1.0)
    assert correct[3] is None and correct[7] is None
    assert sum(c is False for c in correct) == NUM_JOINTS - 2
    assert mean == pytest.approx(100.0)


def test_missing_prediction_counts_wrong():
    gt = make_person()
    preds = preds_for(gt, drop=(5,))
    correct, mean = score_pair(preds, gt, threshold=1.0)
    assert correct[5] is False
    assert mean == math.inf


def test_greedy_matching_prefers_better_pairs():
    a = make_person(cx=0.0)
    b = make_person(cx=200.0)
    pred_b = preds_for(b)              # perfect on b
    pred_a = preds_for(a, dx=4.0)      # slightly off on a, still within pckh
    pairs = match_persons([pred_b, pred_a], [a, b])
    assert set(pairs) == {(0, 1), (1, 0)}
    assert pairs[0] == (0, 1)          # the perfect pair is taken first


def test_matching_skips_persons_without_reference():
    a = make_person(headbox=None)
    pairs = match_persons([preds_for(a)], [a], metric="pckh")
    assert pairs == []
    # the torso metric does not need a head box
    pairs = match_persons([preds_for(a)], [a], metric="pck@0.2")
    assert pairs == [(0, 0)]


def test_evaluate_perfect_predictions():
    ann = ImageAnnotation(id="im0", width=400, height=400,
                          persons=[make_person(cx=50.0, cy=50.0, invisible=(9,))])
    report = evaluate({"im0": [preds_for(ann.persons[0])]}, [ann])
    assert report.mean == 1.0
    assert report.matched == 1
    assert report.per_joint_total[9] == 0
    assert math.isnan(report.per_joint[9])
    text = report.as_text()
    assert "mean: 100.00%" in text
    assert JOINT_NAMES[9] in text


def test_evaluate_is_scale_invariant():
    def scene(scale):
        p = make_person(cx=10.0 * scale)
        p.joints[:, :2] *= scale
        p.headbox *= scale
        ann = ImageAnnotation(id="x", width=4000, height=4000, persons=[p])
        preds = preds_for(p)
        # perturb one joint by 40% of the (scaled) head size: inside at alpha .5
        preds[4] = (preds[4][0] + 0.4 * head_size(p), preds[4][1], 1.0)
        # and one by 60%: outside
        preds[8] = (preds[8][0] + 0.6 * head_size(p), preds[8][1], 1.0)
        return evaluate({"x": [preds]}, [ann])

    small, large = scene(1.0), scene(7.0)
    assert np.array_equal(small.per_joint_correct, large.per_joint_correct)
    assert small.per_joint_correct[4] == 1
    assert small.per_joint_correct[8] == 0


def test_torso_metric_threshold():
    p = make_person(headbox=None)
    torso = torso_size(p)
    preds = preds_for(p)
    preds[0] = (p.joints[0, 0] + 0.19 * torso, p.joints[0, 1], 1.0)
    preds[1] = (p.joints[1, 0] + 0.21 * torso, p.joints[1, 1], 1.0)
    ann = ImageAnnotation(id="t", width=400, height=400, persons=[p])
    report = evaluate({"t": [preds]}, [ann], metric="pck@0.2")
    assert report.per_joint_correct[0] == 1
    assert report.per_joint_correct[1] == 0
    assert report.alpha == 0.2


def test_unmatched_annotations_still_count():
    a = make_person(cx=0.0, invisible=(15,))
    b = make_person(cx=300.0)
    ann = ImageAnnotation(id="u", width=800, height=400, persons=[a, b])
    report = evaluate({"u": [preds_for(a)]}, [ann])
    assert report.matched == 1
    assert report.unmatched_gt == 1
    # joint 0: visible in both persons, predicted only for a
    assert report.per_joint_total[0] == 2
    assert report.per_joint_correct[0] == 1
    # joint 15: a's is invisible, so only b contributes
    assert report.per_joint_total[15] == 1
    assert report.per_joint[0] == 0.5


def test_empty_report_mean_is_nan():
    report = evaluate({}, [])
    assert math.isnan(report.mean)
    assert "-" in report.as_text()


def test_surplus_predictions_counted():
    a = make_person()
    ann = ImageAnnotation(id="s", width=400, height=400, persons=[a])
    report = evaluate({"s": [preds_for(a), preds_for(a, dx=500.0)]}, [ann])
    assert report.matched == 1
    assert report.unmatched_pred == 1
