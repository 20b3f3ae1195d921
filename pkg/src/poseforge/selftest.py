"""Built-in invariant checks, runnable from the command line.

Five properties of the encoding/decoding pipeline that must hold for
any input: score-map clamping, offset locality, per-person joint
uniqueness, peak-extraction determinism (including the plateau
tie-break), and translation equivariance of the encoder.
"""

from __future__ import annotations

import numpy as np

from .codec import (
    CENTROID,
    NUM_JOINTS,
    CodecConfig,
    ImageAnnotation,
    PersonAnnotation,
    encode_annotation,
    hierarchical_tree,
    make_tree,
)
from .costs import format_ratio, separable_ratio
from .decoder import DecodeConfig, decode_poses, extract_peaks
from .synth import SceneConfig, default_headbox, generate_scene, skeleton_instance


def _overlapping_scene():
    """Two near-coincident people so the gaussian sums exceed 1 somewhere."""
    persons = []
    for center in ((120.0, 128.0), (136.0, 128.0)):
        xy = skeleton_instance(0.9, 0.0, center)
        joints = np.concatenate([xy, np.ones((NUM_JOINTS, 1))], axis=1)
        persons.append(PersonAnnotation(joints=joints, headbox=default_headbox(xy)))
    return ImageAnnotation("overlap", 256, 256, persons)


def check_heatmap_clamp():
    maps = encode_annotation(_overlapping_scene(), make_tree("flat"), CodecConfig(sigma=4.0))
    raw_max = float(maps.heatmaps.max())
    if raw_max > 1.0 or maps.heatmaps.min() < 0.0:
        return f"score maps escaped [0, 1]: max={raw_max}"
    if raw_max != 1.0:
        return f"expected the overlap to saturate the clamp, max={raw_max}"
    return None


def check_offset_locality():
    ann = generate_scene(SceneConfig(persons=(2, 4)), seed=11)
    config = CodecConfig()
    tree = hierarchical_tree()
    maps = encode_annotation(ann, tree, config)
    gh, gw = maps.grid_shape
    ys, xs = np.mgrid[0:gh, 0:gw].astype(np.float64)
    for j in range(NUM_JOINTS):
        near_any = np.zeros((gh, gw), dtype=bool)
        for p in ann.persons:
            x, y, v = p.joints[j]
            if v > 0:
                near_any |= ((xs - x / config.stride) ** 2 + (ys - y / config.stride) ** 2
                             <= config.tau ** 2)
        outside = ~near_any
        if np.any(maps.offsets[2 * j][outside] != 0) or np.any(maps.offsets[2 * j + 1][outside] != 0):
            return f"joint {j}: offsets written outside the tau-neighborhood"
    if np.any(maps.offsets[2 * CENTROID:] != 0):
        return "centroid offset channels must stay zero"
    return None


def check_person_uniqueness():
    ann = generate_scene(SceneConfig(persons=(3, 5)), seed=23)
    maps = encode_annotation(ann, hierarchical_tree(), CodecConfig())
    for tree in ("flat", "hier"):
        persons = decode_poses(maps, DecodeConfig(tree=tree))
        seen = set()
        for p in persons:
            for j, cand in p.joints.items():
                if cand.joint != j:
                    return f"{tree}: candidate for joint {cand.joint} stored in slot {j}"
                key = (cand.joint, cand.x, cand.y)
                if key in seen:
                    return f"{tree}: candidate {key} assigned to two persons"
                seen.add(key)
    return None


def check_nms_determinism():
    rng = np.random.default_rng(7)
    noisy = rng.uniform(0, 1, size=(3, 24, 24)).astype(np.float32)
    a = extract_peaks(noisy, thresh=0.5)
    b = extract_peaks(noisy, thresh=0.5)
    if a != b:
        return "repeated extraction disagreed on random maps"
    plateau = np.zeros((1, 12, 12), dtype=np.float32)
    plateau[0, 4:7, 4:7] = 0.8
    cands = extract_peaks(plateau, thresh=0.1)[0]
    if len(cands) != 1 or (cands[0].x, cands[0].y) != (4.0, 4.0):
        return f"plateau must yield exactly its first cell, got {cands}"
    return None


def check_translation_equivariance():
    base = generate_scene(SceneConfig(persons=(2, 3), width=192, height=192), seed=5)
    config = CodecConfig()
    dx_cells, dy_cells = 3, 2
    dx, dy = dx_cells * config.stride, dy_cells * config.stride
    shifted_persons = []
    for p in base.persons:
        joints = p.joints.copy()
        joints[:, 0] += dx
        joints[:, 1] += dy
        headbox = p.headbox + np.array([dx, dy, dx, dy])
        shifted_persons.append(PersonAnnotation(joints=joints, headbox=headbox))
    grown = ImageAnnotation(base.id, base.width + 2 * dx, base.height + 2 * dy, shifted_persons)
    # same z on both renders, otherwise offsets scale differently
    tree = hierarchical_tree()
    small = encode_annotation(
        ImageAnnotation(base.id, grown.width, grown.height, base.persons), tree, config)
    big = encode_annotation(grown, tree, config)
    gh, gw = small.grid_shape
    h_ok = np.array_equal(
        small.heatmaps[:, :gh - dy_cells, :gw - dx_cells],
        big.heatmaps[:, dy_cells:gh, dx_cells:gw],
    )
    o_ok = np.array_equal(
        small.offsets[:, :gh - dy_cells, :gw - dx_cells],
        big.offsets[:, dy_cells:gh, dx_cells:gw],
    )
    if not h_ok:
        return "score maps are not translation equivariant"
    if not o_ok:
        return "offset maps are not translation equivariant"
    return None


CHECKS = [
    ("heatmap clamp", check_heatmap_clamp),
    ("offset locality", check_offset_locality),
    ("per-person joint uniqueness", check_person_uniqueness),
    ("peak extraction determinism", check_nms_determinism),
    ("translation equivariance", check_translation_equivariance),
]


def run_selftest(out=print) -> int:
    out(f"separable/standard conv cost (k=3, c=128): {format_ratio(separable_ratio(3, 128))}")
    failures = 0
    for name, check in CHECKS:
        try:
            problem = check()
        except Exception as exc:  # a crash is a failure, not an abort
            problem = f"raised {type(exc).__name__}: {exc}"
        if problem is None:
            out(f"ok   {name}")
        else:
            failures += 1
            out(f"FAIL {name}: {problem}")
    out(f"{len(CHECKS) - failures}/{len(CHECKS)} invariant checks passed")
    return 0 if failures == 0 else 1
