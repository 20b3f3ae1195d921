"""Synthetic multi-person scenes with exact annotations.

Each person is a scaled, rotated copy of a canonical 16-joint skeleton
whose joint mean sits exactly at the placement point, so the placement
point is the person's centroid.  Placement is rejection-sampled so that
for any two people, same-index joints and the centroids themselves stay
at least `min_separation` apart.  Every score-map channel then keeps one
well-separated peak per person, which makes noiseless decoding
unambiguous.  People may still overlap; only same-channel points repel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple, Union

import numpy as np

from .codec import (
    CENTROID,
    NUM_JOINTS,
    GroundTruthMaps,
    ImageAnnotation,
    PersonAnnotation,
)

# Upright figure in pixels at scale 1.0, roughly 110 px tall, (x, y-down),
# listed in canonical joint order (r_ankle first, l_wrist last).
_RAW_SKELETON = np.array([
    (-15.0, 62.0),   # r_ankle
    (-14.0, 35.0),   # r_knee
    (-12.0, 5.0),    # r_hip
    (12.0, 5.0),     # l_hip
    (14.0, 35.0),    # l_knee
    (15.0, 62.0),    # l_ankle
    (0.0, 5.0),      # pelvis
    (0.0, -30.0),    # thorax
    (0.0, -35.0),    # upper_neck
    (0.0, -50.0),    # head_top
    (-33.0, 15.0),   # r_wrist
    (-28.0, -5.0),   # r_elbow
    (-20.0, -28.0),  # r_shoulder
    (20.0, -28.0),   # l_shoulder
    (28.0, -5.0),    # l_elbow
    (33.0, 15.0),    # l_wrist
], dtype=np.float64)

# Shifted so the joint mean is exactly the origin.
CANONICAL_SKELETON = _RAW_SKELETON - _RAW_SKELETON.mean(axis=0)

HEAD_TOP, UPPER_NECK = 9, 8


@dataclass(frozen=True)
class SceneConfig:
    width: int = 256
    height: int = 256
    persons: Union[int, Tuple[int, int]] = (1, 5)
    scale_range: Tuple[float, float] = (0.7, 1.1)
    rotation_deg: float = 30.0
    min_separation: float = 32.0   # between same-channel points of two persons, pixels
    margin: float = 4.0
    max_tries: int = 1000

    def person_range(self):
        if isinstance(self.persons, int):
            return self.persons, self.persons
        lo, hi = self.persons
        if lo > hi or lo < 0:
            raise ValueError(f"bad person range {self.persons}")
        return lo, hi


def skeleton_instance(scale=1.0, rotation_deg=0.0, center=(0.0, 0.0)) -> np.ndarray:
    """(16, 2) joint positions for one posed figure."""
    theta = math.radians(rotation_deg)
    rot = np.array([[math.cos(theta), -math.sin(theta)],
                    [math.sin(theta), math.cos(theta)]])
    pts = (CANONICAL_SKELETON * scale) @ rot.T
    return pts + np.asarray(center, dtype=np.float64)


def default_headbox(joints: np.ndarray) -> np.ndarray:
    """Axis-aligned box around the head segment with proportional padding."""
    a = joints[HEAD_TOP]
    b = joints[UPPER_NECK]
    seg = math.hypot(a[0] - b[0], a[1] - b[1])
    pad = 0.35 * seg + 2.0
    return np.array([
        min(a[0], b[0]) - pad, min(a[1], b[1]) - pad,
        max(a[0], b[0]) + pad, max(a[1], b[1]) + pad,
    ])


def _clear_of(center, joints_xy, placed, min_sep):
    for other_center, other_xy in placed:
        if math.hypot(center[0] - other_center[0], center[1] - other_center[1]) < min_sep:
            return False
        diff = joints_xy - other_xy
        if float(np.min(np.hypot(diff[:, 0], diff[:, 1]))) < min_sep:
            return False
    return True


def generate_scene(config: SceneConfig, seed: int) -> ImageAnnotation:
    """Deterministic scene for a seed; same seed, same annotation."""
    rng = np.random.default_rng(seed)
    lo, hi = config.person_range()
    n = int(rng.integers(lo, hi + 1))
    placed = []  # (center, joint positions)
    persons = []
    for _ in range(n):
        scale = float(rng.uniform(*config.scale_range))
        rot = float(rng.uniform(-config.rotation_deg, config.rotation_deg))
        local = skeleton_instance(scale, rot)
        radius = float(np.max(np.hypot(local[:, 0], local[:, 1])))
        low_x = config.margin + radius
        high_x = config.width - config.margin - radius
        low_y = config.margin + radius
        high_y = config.height - config.margin - radius
        if low_x >= high_x or low_y >= high_y:
            raise ValueError(f"figure radius {radius:.1f} does not fit; config: {config}")
        for attempt in range(config.max_tries):
            center = np.array([rng.uniform(low_x, high_x), rng.uniform(low_y, high_y)])
            joints_xy = local + center
            if _clear_of(center, joints_xy, placed, config.min_separation):
                break
        else:
            raise ValueError(
                f"could not place person {len(placed) + 1}/{n} after "
                f"{config.max_tries} tries; config: {config}"
            )
        placed.append((center, joints_xy))
        joints = np.concatenate([joints_xy, np.ones((NUM_JOINTS, 1))], axis=1)
        persons.append(PersonAnnotation(joints=joints, headbox=default_headbox(joints_xy)))
    return ImageAnnotation(
        id=f"synth-{seed:06d}",
        width=config.width,
        height=config.height,
        persons=persons,
    )


def perturb_maps(maps: GroundTruthMaps, peak_jitter=0.0, offset_noise=0.0,
                 seed=0) -> GroundTruthMaps:
    """Noisy copy of ground-truth maps; zero noise returns the maps unchanged.

    peak_jitter sigma_p moves each score-map peak by gaussian sigma_p
    cells and re-renders its channel.  offset_noise rho adds gaussian
    noise to every written offset vector with standard deviation
    (rho / z) * max(1, length_in_cells): at least rho cells of endpoint
    error, growing in proportion to the offset's range, which is what
    makes long-range vectors less reliable than short ones.
    """
    if peak_jitter == 0.0 and offset_noise == 0.0:
        return maps
    rng = np.random.default_rng(seed)
    heat = maps.heatmaps.copy()
    offs = maps.offsets.copy()
    z = maps.z
    if peak_jitter > 0.0:
        from .decoder import extract_peaks
        cands = extract_peaks(heat, thresh=0.05, window=3)
        gh, gw = heat.shape[1:]
        ys, xs = np.mgrid[0:gh, 0:gw].astype(np.float64)
        for ch, chan_cands in enumerate(cands):
            if not chan_cands:
                continue
            plane = np.zeros((gh, gw), dtype=np.float64)
            for c in chan_cands:
                jx = c.x + rng.normal(0.0, peak_jitter)
                jy = c.y + rng.normal(0.0, peak_jitter)
                plane += np.exp(-((xs - jx) ** 2 + (ys - jy) ** 2)
                                / (2.0 * maps.sigma ** 2))
            heat[ch] = np.minimum(plane, 1.0).astype(np.float32)
    if offset_noise > 0.0:
        for j in range(NUM_JOINTS + 1):
            vx = offs[2 * j].astype(np.float64)
            vy = offs[2 * j + 1].astype(np.float64)
            written = (vx != 0.0) | (vy != 0.0)
            if not np.any(written):
                continue
            length_cells = np.hypot(vx, vy) * z
            sig = (offset_noise / z) * np.maximum(1.0, length_cells)
            vx = vx + rng.normal(0.0, 1.0, vx.shape) * sig * written
            vy = vy + rng.normal(0.0, 1.0, vy.shape) * sig * written
            offs[2 * j] = vx.astype(np.float32)
            offs[2 * j + 1] = vy.astype(np.float32)
    return replace(maps, heatmaps=np.clip(heat, 0.0, 1.0), offsets=offs)
