"""Keypoint accuracy scoring between predicted and annotated poses.

The default metric marks a joint correct when its error is within
alpha * head size, head size being 0.6 of the annotated head box
diagonal.  An alternative normalizes by torso size (left shoulder to
right hip), threshold 0.2, for datasets annotated without head boxes.
Only joints visible in the annotation are scored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .codec import JOINT_NAMES, NUM_JOINTS, ImageAnnotation, PersonAnnotation

L_SHOULDER, R_HIP = 13, 2


def head_size(person: PersonAnnotation) -> Optional[float]:
    if person.headbox is None:
        return None
    x1, y1, x2, y2 = person.headbox
    return 0.6 * math.hypot(x2 - x1, y2 - y1)


def torso_size(person: PersonAnnotation) -> Optional[float]:
    a = person.joints[L_SHOULDER]
    b = person.joints[R_HIP]
    if a[2] <= 0 or b[2] <= 0:
        return None
    return math.hypot(a[0] - b[0], a[1] - b[1])


def reference_size(person: PersonAnnotation, metric="pckh") -> Optional[float]:
    """Distance that normalizes joint errors; None excludes the person."""
    if metric == "pckh":
        return head_size(person)
    if metric == "pck@0.2":
        return torso_size(person)
    raise ValueError(f"unknown metric {metric!r}")


def metric_alpha(metric: str, alpha: Optional[float]) -> float:
    if alpha is not None:
        return alpha
    return 0.5 if metric == "pckh" else 0.2


def score_pair(pred_joints: Sequence, gt: PersonAnnotation, threshold: float):
    """(per-joint correctness or None, mean error over scored joints).

    pred_joints holds 16 entries of (x, y, score) or None.  Joints the
    annotation marks invisible are skipped; a visible joint with no
    prediction counts as wrong with infinite error.
    """
    correct: List[Optional[bool]] = [None] * NUM_JOINTS
    dists = []
    for j in range(NUM_JOINTS):
        gx, gy, v = gt.joints[j]
        if v <= 0:
            continue
        p = pred_joints[j]
        if p is None:
            correct[j] = False
            dists.append(math.inf)
            continue
        d = math.hypot(p[0] - gx, p[1] - gy)
        correct[j] = d <= threshold
        dists.append(d)
    mean = float(np.mean(dists)) if dists else math.inf
    return correct, mean


def match_persons(preds: List[Sequence], gts: List[PersonAnnotation],
                  metric="pckh", alpha=None) -> List[Tuple[int, int]]:
    """Greedy one-to-one matching of predictions to annotated persons.

    Pairs are taken in order of most correctly-located joints, ties
    broken by smaller mean joint distance.  Annotated persons without a
    reference size are excluded.
    """
    a = metric_alpha(metric, alpha)
    scored = []
    for gi, gt in enumerate(gts):
        ref = reference_size(gt, metric)
        if ref is None:
            continue
        for pi, pred in enumerate(preds):
            correct, mean = score_pair(pred, gt, a * ref)
            n_ok = sum(1 for c in correct if c)
            scored.append((-n_ok, mean, pi, gi))
    scored.sort(key=lambda t: (t[0], t[1], t[2], t[3]))
    used_p, used_g = set(), set()
    pairs = []
    for _, _, pi, gi in scored:
        if pi in used_p or gi in used_g:
            continue
        used_p.add(pi)
        used_g.add(gi)
        pairs.append((pi, gi))
    return pairs


@dataclass
class MetricReport:
    metric: str
    alpha: float
    per_joint_correct: np.ndarray   # (16,) int
    per_joint_total: np.ndarray     # (16,) int
    matched: int = 0
    unmatched_pred: int = 0
    unmatched_gt: int = 0

    @property
    def per_joint(self):
        """Fraction correct per joint; nan where nothing was scored."""
        with np.errstate(invalid="ignore"):
            return np.where(self.per_joint_total > 0,
                            self.per_joint_correct / np.maximum(self.per_joint_total, 1),
                            np.nan)

    @property
    def mean(self):
        """Unweighted average over joint categories that have samples."""
        vals = self.per_joint
        vals = vals[~np.isnan(vals)]
        return float(vals.mean()) if vals.size else math.nan

    def as_text(self):
        lines = [f"metric: {self.metric} alpha={self.alpha}"]
        for j, name in enumerate(JOINT_NAMES):
            if self.per_joint_total[j]:
                lines.append(
                    f"  {name:<12} {self.per_joint_correct[j]:>5}/{self.per_joint_total[j]:<5} "
                    f"{100.0 * self.per_joint[j]:6.2f}%"
                )
            else:
                lines.append(f"  {name:<12} {'-':>11}")
        lines.append(f"mean: {100.0 * self.mean:.2f}%")
        lines.append(
            f"persons matched: {self.matched}, unmatched predictions: {self.unmatched_pred}, "
            f"unmatched annotations: {self.unmatched_gt}"
        )
        return "\n".join(lines)


def evaluate(pred_images: Dict[str, List[Sequence]],
             gt_images: List[ImageAnnotation],
             metric="pckh", alpha=None) -> MetricReport:
    """Aggregate joint accuracy over a dataset.

    pred_images maps image id to a list of predicted persons, each a
    16-entry sequence of (x, y, score) or None.
    """
    a_frac = metric_alpha(metric, alpha)
    correct = np.zeros(NUM_JOINTS, dtype=np.int64)
    total = np.zeros(NUM_JOINTS, dtype=np.int64)
    matched = un_pred = un_gt = 0
    for ann in gt_images:
        preds = pred_images.get(ann.id, [])
        scorable = [p for p in ann.persons if reference_size(p, metric) is not None]
        pairs = match_persons(preds, ann.persons, metric, alpha)
        matched += len(pairs)
        un_pred += len(preds) - len(pairs)
        un_gt += len(scorable) - len(pairs)
        for pi, gi in pairs:
            gt = ann.persons[gi]
            ref = reference_size(gt, metric)
            joint_ok, _ = score_pair(preds[pi], gt, a_frac * ref)
            for j, ok in enumerate(joint_ok):
                if ok is None:
                    continue
                total[j] += 1
                correct[j] += int(ok)
        # annotated-but-unmatched persons still count toward the denominator
        matched_gis = {gi for _, gi in pairs}
        for gi, gt in enumerate(ann.persons):
            if gi in matched_gis or reference_size(gt, metric) is None:
                continue
            for j in range(NUM_JOINTS):
                if gt.joints[j, 2] > 0:
                    total[j] += 1
    return MetricReport(metric, a_frac, correct, total, matched, un_pred, un_gt)
