"""Ground-truth map encoding and training losses.

Joint indexing is fixed to the standard 16-joint layout:

    0 r_ankle   1 r_knee    2 r_hip     3 l_hip
    4 l_knee    5 l_ankle   6 pelvis    7 thorax
    8 upper_neck 9 head_top 10 r_wrist  11 r_elbow
    12 r_shoulder 13 l_shoulder 14 l_elbow 15 l_wrist

Channel 16 carries the person centroid as a pseudo-joint.  Score maps
store, per cell, the sum over people of a unit gaussian around each
joint, clamped at 1.  Offset maps store, in the cells within `tau` grid
units of a joint, the vector from that cell to the joint's parent,
divided by the normalizer Z = min(map_h, map_w) / 2; cells claimed by
several people store the average.  All map-space coordinates are
(x, y) = (column, row); arrays are indexed [channel, y, x].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

JOINT_NAMES = (
    "r_ankle", "r_knee", "r_hip", "l_hip", "l_knee", "l_ankle",
    "pelvis", "thorax", "upper_neck", "head_top",
    "r_wrist", "r_elbow", "r_shoulder", "l_shoulder", "l_elbow", "l_wrist",
)
NUM_JOINTS = 16
CENTROID = 16  # channel index of the pseudo-joint


@dataclass
class PersonAnnotation:
    """One annotated person: joints (16, 3) rows of (x, y, visible)."""

    joints: np.ndarray
    headbox: Optional[np.ndarray] = None  # (x1, y1, x2, y2) or None

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        if self.joints.shape != (NUM_JOINTS, 3):
            raise ValueError(f"joints must have shape ({NUM_JOINTS}, 3), got {self.joints.shape}")
        if self.headbox is not None:
            self.headbox = np.asarray(self.headbox, dtype=np.float64)
            if self.headbox.shape != (4,):
                raise ValueError(f"headbox must have 4 values, got {self.headbox.shape}")

    def visible_mask(self):
        return self.joints[:, 2] > 0


@dataclass
class ImageAnnotation:
    id: str
    width: int
    height: int
    persons: List[PersonAnnotation] = field(default_factory=list)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        for p in self.persons:
            vis = p.visible_mask()
            xy = p.joints[vis, :2]
            if xy.size and (
                np.any(xy[:, 0] < 0) or np.any(xy[:, 0] >= self.width)
                or np.any(xy[:, 1] < 0) or np.any(xy[:, 1] >= self.height)
            ):
                raise ValueError(f"image {self.id}: visible joint outside [0,{self.width})x[0,{self.height})")


@dataclass(frozen=True)
class PoseTree:
    """Parent assignment per joint, plus a processing level for each.

    Level-1 joints hang off the centroid (their "parent" is channel 16);
    higher levels point at an anatomical parent joint.
    """

    name: str
    parent: Dict[int, int]
    level: Dict[int, int]

    def __post_init__(self):
        if set(self.parent) != set(range(NUM_JOINTS)) or set(self.level) != set(range(NUM_JOINTS)):
            raise ValueError("tree must assign a parent and level to each of the 16 joints")
        for j, p in self.parent.items():
            if p != CENTROID and p not in range(NUM_JOINTS):
                raise ValueError(f"joint {j}: invalid parent {p}")
        # every chain must reach the centroid in level-descending order
        for j in range(NUM_JOINTS):
            seen = set()
            cur = j
            while cur != CENTROID:
                if cur in seen:
                    raise ValueError(f"cycle through joint {j}")
                seen.add(cur)
                nxt = self.parent[cur]
                if nxt != CENTROID and self.level[nxt] >= self.level[cur]:
                    raise ValueError(f"joint {cur}: parent {nxt} must sit on a lower level")
                cur = nxt

    def max_level(self):
        return max(self.level.values())

    def joints_at_level(self, lev):
        return sorted(j for j, l in self.level.items() if l == lev)


def flat_tree() -> PoseTree:
    """Every joint attaches directly to the centroid."""
    return PoseTree("flat", {j: CENTROID for j in range(NUM_JOINTS)},
                    {j: 1 for j in range(NUM_JOINTS)})


def hierarchical_tree() -> PoseTree:
    """Three rings: torso joints, then head/elbows/knees, then wrists/ankles."""
    parent = {
        12: CENTROID, 13: CENTROID, 2: CENTROID, 3: CENTROID,
        8: CENTROID, 6: CENTROID, 7: CENTROID,
        9: 8,    # head_top -> upper_neck
        11: 12, 14: 13,  # elbows -> shoulders
        1: 2, 4: 3,      # knees -> hips
        10: 11, 15: 14,  # wrists -> elbows
        0: 1, 5: 4,      # ankles -> knees
    }
    level = {j: 1 for j in (12, 13, 2, 3, 8, 6, 7)}
    level.update({j: 2 for j in (9, 11, 14, 1, 4)})
    level.update({j: 3 for j in (10, 15, 0, 5)})
    return PoseTree("hierarchical", parent, level)


def make_tree(name: str) -> PoseTree:
    if name in ("flat", "centroid"):
        return flat_tree()
    if name in ("hier", "hierarchical"):
        return hierarchical_tree()
    raise ValueError(f"unknown tree {name!r}, expected 'flat' or 'hier'")


@dataclass(frozen=True)
class CodecConfig:
    sigma: float = 2.0   # gaussian spread, grid cells
    tau: float = 3.0     # offset neighborhood radius, grid cells
    stride: int = 4      # image pixels per grid cell

    def __post_init__(self):
        if self.sigma <= 0 or self.tau < 0 or self.stride < 1:
            raise ValueError(f"bad codec config: {self}")


@dataclass
class GroundTruthMaps:
    heatmaps: np.ndarray   # (17, H, W) float32 in [0, 1]
    offsets: np.ndarray    # (34, H, W) float32, normalized by z
    sigma: float
    tau: float
    stride: int

    @property
    def grid_shape(self):
        return self.heatmaps.shape[1:]

    @property
    def z(self):
        return offset_normalizer(*self.grid_shape)


def offset_normalizer(grid_h: int, grid_w: int) -> float:
    return min(grid_h, grid_w) / 2.0


def compute_centroid(person: PersonAnnotation) -> np.ndarray:
    """Mean position of the visible joints, image coordinates."""
    vis = person.visible_mask()
    if not np.any(vis):
        raise ValueError("cannot take the centroid of a person with no visible joints")
    return person.joints[vis, :2].mean(axis=0)


def _grid_points(ann: ImageAnnotation, stride: int):
    """Per person: (grid joints (16, 2), visible mask, grid centroid)."""
    out = []
    for person in ann.persons:
        vis = person.visible_mask()
        if not np.any(vis):
            continue
        pts = person.joints[:, :2] / stride
        out.append((pts, vis, compute_centroid(person) / stride))
    return out


def _splat(channel, x, y, sigma, xs, ys):
    channel += np.exp(-((xs - x) ** 2 + (ys - y) ** 2) / (2.0 * sigma * sigma))


def render_heatmaps(ann: ImageAnnotation, config: CodecConfig) -> np.ndarray:
    """Clamped sum-of-gaussians score maps, (17, H/stride, W/stride)."""
    gh, gw = _grid_dims(ann, config.stride)
    maps = np.zeros((NUM_JOINTS + 1, gh, gw), dtype=np.float64)
    ys, xs = np.mgrid[0:gh, 0:gw].astype(np.float64)
    for pts, vis, centroid in _grid_points(ann, config.stride):
        for j in range(NUM_JOINTS):
            if vis[j]:
                _splat(maps[j], pts[j, 0], pts[j, 1], config.sigma, xs, ys)
        _splat(maps[CENTROID], centroid[0], centroid[1], config.sigma, xs, ys)
    return np.minimum(maps, 1.0).astype(np.float32)


def render_offsets(ann: ImageAnnotation, tree: PoseTree, config: CodecConfig) -> np.ndarray:
    """Parent-pointing offset maps, (34, H/stride, W/stride).

    The centroid's own channel pair (32, 33) stays identically zero.
    When a joint's parent is invisible its centroid stands in, matching
    the decoder's fallback.
    """
    gh, gw = _grid_dims(ann, config.stride)
    z = offset_normalizer(gh, gw)
    acc = np.zeros((2 * (NUM_JOINTS + 1), gh, gw), dtype=np.float64)
    counts = np.zeros((NUM_JOINTS + 1, gh, gw), dtype=np.int64)
    ys, xs = np.mgrid[0:gh, 0:gw].astype(np.float64)
    for pts, vis, centroid in _grid_points(ann, config.stride):
        for j in range(NUM_JOINTS):
            if not vis[j]:
                continue
            p = tree.parent[j]
            if p == CENTROID or not vis[p]:
                target = centroid
            else:
                target = pts[p]
            near = (xs - pts[j, 0]) ** 2 + (ys - pts[j, 1]) ** 2 <= config.tau ** 2
            acc[2 * j][near] += (target[0] - xs[near]) / z
            acc[2 * j + 1][near] += (target[1] - ys[near]) / z
            counts[j][near] += 1
    out = np.zeros_like(acc)
    for j in range(NUM_JOINTS):
        claimed = counts[j] > 0
        out[2 * j][claimed] = acc[2 * j][claimed] / counts[j][claimed]
        out[2 * j + 1][claimed] = acc[2 * j + 1][claimed] / counts[j][claimed]
    return out.astype(np.float32)


def encode_annotation(ann: ImageAnnotation, tree: PoseTree, config: CodecConfig) -> GroundTruthMaps:
    return GroundTruthMaps(
        heatmaps=render_heatmaps(ann, config),
        offsets=render_offsets(ann, tree, config),
        sigma=config.sigma,
        tau=config.tau,
        stride=config.stride,
    )


def _grid_dims(ann: ImageAnnotation, stride: int):
    if ann.height % stride or ann.width % stride:
        raise ValueError(
            f"image {ann.id}: size {ann.width}x{ann.height} not divisible by stride {stride}"
        )
    return ann.height // stride, ann.width // stride


def _masked(pred, gt, mask):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"loss shapes disagree: {pred.shape} vs {gt.shape}")
    if mask is None:
        return pred, gt, None, pred.size
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pred.shape:
        raise ValueError(f"mask shape {mask.shape} must match {pred.shape}")
    count = int(mask.sum())
    if count == 0:
        raise ValueError("empty loss mask")
    return pred, gt, mask, count


def mse_loss(pred, gt, mask=None):
    """Mean squared error and its gradient wrt pred: 2 (pred - gt) / count."""
    pred, gt, mask, count = _masked(pred, gt, mask)
    diff = pred - gt
    if mask is not None:
        diff = np.where(mask, diff, 0.0)
    value = float(np.sum(diff * diff) / count)
    grad = 2.0 * diff / count
    return value, grad


def smooth_l1_loss(pred, gt, mask=None):
    """Mean huber-style loss: 0.5 d^2 inside |d| < 1, |d| - 0.5 outside."""
    pred, gt, mask, count = _masked(pred, gt, mask)
    diff = pred - gt
    if mask is not None:
        diff = np.where(mask, diff, 0.0)
    a = np.abs(diff)
    per = np.where(a < 1.0, 0.5 * diff * diff, a - 0.5)
    if mask is not None:
        per = np.where(mask, per, 0.0)
    value = float(np.sum(per) / count)
    grad = np.where(a < 1.0, diff, np.sign(diff)) / count
    if mask is not None:
        grad = np.where(mask, grad, 0.0)
    return value, grad
