"""Peak extraction and centroid-guided grouping of joint candidates.

A peak must be at least its neighborhood's maximum and strictly greater
than every neighbor earlier in scan order, so a plateau of equal values
yields exactly one candidate (its first cell in scan order).  Grouping
walks candidates in descending score, reconstructs each candidate's
parent location from the offset field, and claims the nearest person
whose slot for that joint is still empty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .codec import CENTROID, NUM_JOINTS, GroundTruthMaps, PoseTree, make_tree, offset_normalizer


@dataclass(frozen=True)
class Candidate:
    joint: int      # 0..15, or 16 for centroid candidates
    x: float        # grid coordinates
    y: float
    score: float


@dataclass
class PersonInstance:
    centroid: Tuple[float, float]
    score: float
    joints: Dict[int, Candidate] = field(default_factory=dict)


@dataclass(frozen=True)
class DecodeConfig:
    thresh: float = 0.1
    window: int = 3
    tree: str = "flat"
    refine: bool = False     # quarter-cell peak adjustment
    spawn: bool = False      # start a new person when every slot is taken

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 3, got {self.window}")
        if not 0 <= self.thresh:
            raise ValueError(f"thresh must be >= 0, got {self.thresh}")


def extract_peaks(heatmaps: np.ndarray, thresh=0.1, window=3, refine=False) -> List[List[Candidate]]:
    """Per-channel candidate lists, sorted by descending score.

    Ties sort by scan order (row, then column), which keeps the result
    invariant to any permutation of equal-score inputs.
    """
    if heatmaps.ndim != 3:
        raise ValueError(f"heatmaps must be (channels, h, w), got {heatmaps.shape}")
    radius = window // 2
    c, h, w = heatmaps.shape
    out = []
    for ch in range(c):
        plane = heatmaps[ch]
        ok = plane >= thresh
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                if dy == 0 and dx == 0:
                    continue
                shifted = _shift(plane, dy, dx)
                if dy < 0 or (dy == 0 and dx < 0):
                    ok &= plane > shifted   # earlier in scan order
                else:
                    ok &= plane >= shifted
        cands = []
        for y, x in zip(*np.nonzero(ok)):
            px, py = float(x), float(y)
            if refine:
                px += _quarter_step(plane, y, x, axis=1)
                py += _quarter_step(plane, y, x, axis=0)
            cands.append(Candidate(ch, px, py, float(plane[y, x])))
        cands.sort(key=lambda cand: (-cand.score, cand.y, cand.x))
        out.append(cands)
    return out


def _shift(plane, dy, dx):
    """Plane translated by (dy, dx) with -inf filling the exposed border."""
    out = np.full_like(plane, -np.inf)
    h, w = plane.shape
    ys = slice(max(0, -dy), min(h, h - dy))
    xs = slice(max(0, -dx), min(w, w - dx))
    out[ys, xs] = plane[max(0, dy):min(h, h + dy), max(0, dx):min(w, w + dx)]
    return out


def _quarter_step(plane, y, x, axis):
    h, w = plane.shape
    if axis == 1:
        lo = plane[y, x - 1] if x > 0 else -np.inf
        hi = plane[y, x + 1] if x + 1 < w else -np.inf
    else:
        lo = plane[y - 1, x] if y > 0 else -np.inf
        hi = plane[y + 1, x] if y + 1 < h else -np.inf
    if hi > lo:
        return 0.25
    if lo > hi:
        return -0.25
    return 0.0


def predict_parent(cand: Candidate, offsets: np.ndarray, z: float) -> Tuple[float, float]:
    """Recover the parent location: candidate position + z * stored vector.

    The vector is read at the candidate's nearest grid cell.
    """
    h, w = offsets.shape[1:]
    cx = min(max(int(round(cand.x)), 0), w - 1)
    cy = min(max(int(round(cand.y)), 0), h - 1)
    vx = float(offsets[2 * cand.joint, cy, cx])
    vy = float(offsets[2 * cand.joint + 1, cy, cx])
    return cand.x + z * vx, cand.y + z * vy


def _claim(person: PersonInstance, joint: int, cand: Candidate):
    person.joints[joint] = cand


def _nearest_open(persons, joint, point, reference):
    """Index of the nearest person with an empty slot, or None.

    `reference(person)` supplies the comparison point for each person.
    Distance ties go to the earlier (higher ranked) person.
    """
    best = None
    best_d = math.inf
    for i, person in enumerate(persons):
        if joint in person.joints:
            continue
        ref = reference(person)
        if ref is None:
            continue
        d = math.hypot(point[0] - ref[0], point[1] - ref[1])
        if d < best_d:
            best, best_d = i, d
    return best


def _seed_persons(centroid_cands):
    return [PersonInstance(centroid=(c.x, c.y), score=c.score) for c in centroid_cands]


def group_flat(candidates: List[List[Candidate]], offsets: np.ndarray, z: float,
               spawn=False) -> List[PersonInstance]:
    """Assign every joint candidate to the nearest open centroid."""
    persons = _seed_persons(candidates[CENTROID])
    for joint in range(NUM_JOINTS):
        for cand in candidates[joint]:
            point = predict_parent(cand, offsets, z)
            idx = _nearest_open(persons, joint, point, lambda p: p.centroid)
            if idx is None:
                if spawn:
                    fresh = PersonInstance(centroid=point, score=cand.score)
                    _claim(fresh, joint, cand)
                    persons.append(fresh)
                continue
            _claim(persons[idx], joint, cand)
    return persons


def group_hierarchical(candidates: List[List[Candidate]], offsets: np.ndarray, z: float,
                       tree: PoseTree, spawn=False) -> List[PersonInstance]:
    """Level-by-level assignment along the pose tree.

    Level-1 joints behave exactly like flat grouping.  Deeper joints
    compare their predicted parent location against each person's
    already-claimed parent joint, falling back to the person's centroid
    when that parent is missing.
    """
    persons = _seed_persons(candidates[CENTROID])
    for lev in range(1, tree.max_level() + 1):
        for joint in tree.joints_at_level(lev):
            parent = tree.parent[joint]

            def reference(person, parent=parent):
                if parent != CENTROID and parent in person.joints:
                    got = person.joints[parent]
                    return got.x, got.y
                return person.centroid

            for cand in candidates[joint]:
                point = predict_parent(cand, offsets, z)
                idx = _nearest_open(persons, joint, point, reference)
                if idx is None:
                    if spawn:
                        fresh = PersonInstance(centroid=point, score=cand.score)
                        _claim(fresh, joint, cand)
                        persons.append(fresh)
                    continue
                _claim(persons[idx], joint, cand)
    return persons


def decode_poses(maps: GroundTruthMaps, config: DecodeConfig) -> List[PersonInstance]:
    """Full decode: peaks, grouping, and scaling back to image pixels.

    Coordinates are multiplied by the maps' stride on the way out.
    """
    cands = extract_peaks(maps.heatmaps, config.thresh, config.window, config.refine)
    gh, gw = maps.grid_shape
    z = offset_normalizer(gh, gw)
    tree = make_tree(config.tree)
    if tree.name == "flat":
        persons = group_flat(cands, maps.offsets, z, config.spawn)
    else:
        persons = group_hierarchical(cands, maps.offsets, z, tree, config.spawn)
    s = float(maps.stride)
    scaled = []
    for p in persons:
        joints = {
            j: replace(c, x=c.x * s, y=c.y * s)
            for j, c in p.joints.items()
        }
        scaled.append(PersonInstance(
            centroid=(p.centroid[0] * s, p.centroid[1] * s),
            score=p.score,
            joints=joints,
        ))
    return scaled
