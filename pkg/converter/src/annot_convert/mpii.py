"""MPII release annotations (MATLAB container) to canonical pose JSON.

The release keeps everything in a RELEASE struct: `annolist` holds one
entry per image (image.name plus annorect person structs), `img_train`
flags the training split.  This tool calls the held-out flag value the
val split.  Joint points carry MPII ids 0..15, which is already the
canonical row order, so conversion places each point at its id and
emits `[0.0, 0.0, 0]` for ids never annotated.  A point's `is_visible`
arrives as a number, a one-char string, or MATLAB `[]`; empty means
visible.

The container records no image dimensions (those live in the JPEGs,
which are out of scope), so width and height are synthesized as the
smallest size covering every annotated point and head box corner plus a
16 px margin, never below 64.  Everything else is carried losslessly:
re-reading the JSON recovers each coordinate exactly.
"""

from __future__ import annotations

import json
import math
import sys
from importlib import resources

import jsonschema
import numpy as np
from scipy.io import loadmat

NUM_JOINTS = 16
SIZE_MARGIN = 16
MIN_SIZE = 64


class RecordError(ValueError):
    """One annolist record cannot be converted; the batch goes on."""


def validate_annotations(doc: dict):
    with resources.files("annot_convert.schemas").joinpath(
            "annotations.schema.json").open("r") as fh:
        jsonschema.validate(doc, json.load(fh))


def _scalar(value):
    """Unwrap a squeezed MATLAB value; [] and missing become None."""
    if value is None or isinstance(value, str):
        return value if value != "" else None
    if isinstance(value, np.ndarray):
        if value.size == 0:
            return None
        if value.size == 1:
            return value.reshape(-1)[0].item()
        raise RecordError(f"expected a scalar, got shape {value.shape}")
    return value


def _float(value, what):
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise RecordError(f"{what} is not a number: {value!r}")
    if not math.isfinite(out):
        raise RecordError(f"{what} is not finite: {out!r}")
    return out


def _visibility(raw):
    v = _scalar(raw)
    if v is None:
        return 1  # annotated but unmarked points count as visible
    v = _float(v, "is_visible")
    if v not in (0.0, 1.0):
        raise RecordError(f"is_visible must be 0 or 1, got {v!r}")
    return int(v)


def _joint_rows(annopoints):
    rows = [[0.0, 0.0, 0] for _ in range(NUM_JOINTS)]
    if annopoints is None or (isinstance(annopoints, np.ndarray) and annopoints.size == 0):
        return rows
    points = np.atleast_1d(getattr(annopoints, "point", np.array([])))
    seen = set()
    for p in points:
        jid = _scalar(getattr(p, "id", None))
        if jid is None:
            raise RecordError("point without an id")
        jid = int(_float(jid, "point id"))
        if not 0 <= jid < NUM_JOINTS:
            raise RecordError(f"point id {jid} out of range")
        if jid in seen:
            raise RecordError(f"duplicate point id {jid}")
        seen.add(jid)
        x = _float(_scalar(getattr(p, "x", None)), "point x")
        y = _float(_scalar(getattr(p, "y", None)), "point y")
        rows[jid] = [x, y, _visibility(getattr(p, "is_visible", None))]
    return rows


def _headbox(rect):
    corners = [_scalar(getattr(rect, name, None)) for name in ("x1", "y1", "x2", "y2")]
    if all(c is None for c in corners):
        return None
    if any(c is None for c in corners):
        raise RecordError("partial head box")
    return [_float(c, "head box corner") for c in corners]


def record_to_image(rec) -> dict:
    """One annolist entry as a canonical image dict.

    Raises RecordError when the record does not follow the release
    structure.
    """
    name = _scalar(getattr(getattr(rec, "image", None), "name", None))
    if not isinstance(name, str):
        raise RecordError("record has no image name")
    persons = []
    xs, ys = [], []
    rects = getattr(rec, "annorect", None)
    if rects is not None and not (isinstance(rects, np.ndarray) and rects.size == 0):
        for rect in np.atleast_1d(rects):
            rows = _joint_rows(getattr(rect, "annopoints", None))
            box = _headbox(rect)
            for x, y, v in rows:
                if (x, y, v) != (0.0, 0.0, 0):
                    xs.append(x)
                    ys.append(y)
            if box is not None:
                xs.extend([box[0], box[2]])
                ys.extend([box[1], box[3]])
            persons.append({"joints": rows, "headbox": box})
    width = max(MIN_SIZE, math.ceil(max(xs)) + SIZE_MARGIN) if xs else MIN_SIZE
    height = max(MIN_SIZE, math.ceil(max(ys)) + SIZE_MARGIN) if ys else MIN_SIZE
    return {"id": name, "width": width, "height": height, "persons": persons}


def _record_name(rec):
    try:
        name = _scalar(rec.image.name)
        return name if isinstance(name, str) else "?"
    except (AttributeError, RecordError):
        return "?"


def load_release(path):
    """(records, train flags) out of an MPII release container."""
    data = loadmat(path, squeeze_me=True, struct_as_record=False)
    if "RELEASE" not in data:
        raise ValueError(f"{path}: not an MPII release container (no RELEASE struct)")
    rel = data["RELEASE"]
    records = np.atleast_1d(getattr(rel, "annolist", np.array([])))
    flags = np.atleast_1d(np.asarray(getattr(rel, "img_train", np.array([]))))
    if len(records) != len(flags):
        raise ValueError(f"{path}: annolist has {len(records)} records "
                         f"but img_train has {len(flags)} flags")
    return records, flags.astype(np.int64)


def convert_mpii(in_path, out_path, split="train", schema_check=False) -> int:
    """Convert one split of a release container; returns images written."""
    if split not in ("train", "val"):
        raise ValueError(f"split must be 'train' or 'val', got {split!r}")
    records, flags = load_release(in_path)
    want = 1 if split == "train" else 0
    images = []
    skipped = 0
    for i, (rec, flag) in enumerate(zip(records, flags), start=1):
        if flag != want:
            continue
        try:
            images.append(record_to_image(rec))
        except RecordError as exc:
            skipped += 1
            print(f"warning: skipped record {i} ({_record_name(rec)}): {exc}",
                  file=sys.stderr)
    doc = {"images": images}
    if schema_check:
        validate_annotations(doc)
    with open(out_path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return len(images)
