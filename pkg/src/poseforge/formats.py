"""Canonical JSON reading and writing for annotations and decoded poses.

The writers produce a stable, diff-friendly form (two-space indent, keys
in insertion order, trailing newline) so fixture files can be compared
byte for byte.
"""

from __future__ import annotations

import json
from importlib import resources
from typing import Dict, List

import jsonschema
import numpy as np

from .codec import NUM_JOINTS, ImageAnnotation, PersonAnnotation
from .decoder import PersonInstance


def _load_schema(name):
    with resources.files("poseforge.schemas").joinpath(name).open("r") as fh:
        return json.load(fh)


def validate_annotations(doc: dict):
    jsonschema.validate(doc, _load_schema("annotations.schema.json"))


def validate_poses(doc: dict):
    jsonschema.validate(doc, _load_schema("poses.schema.json"))


def annotations_to_doc(images: List[ImageAnnotation]) -> dict:
    out = []
    for ann in images:
        persons = []
        for p in ann.persons:
            persons.append({
                "joints": [[float(x), float(y), int(v)] for x, y, v in p.joints],
                "headbox": None if p.headbox is None else [float(v) for v in p.headbox],
            })
        out.append({
            "id": ann.id,
            "width": int(ann.width),
            "height": int(ann.height),
            "persons": persons,
        })
    return {"images": out}


def doc_to_annotations(doc: dict, schema_check=True) -> List[ImageAnnotation]:
    if schema_check:
        validate_annotations(doc)
    images = []
    for img in doc["images"]:
        persons = [
            PersonAnnotation(
                joints=np.asarray(p["joints"], dtype=np.float64),
                headbox=None if p.get("headbox") is None else np.asarray(p["headbox"], dtype=np.float64),
            )
            for p in img["persons"]
        ]
        images.append(ImageAnnotation(img["id"], img["width"], img["height"], persons))
    return images


def poses_to_doc(images: Dict[str, List[PersonInstance]]) -> dict:
    out = []
    for image_id, persons in images.items():
        rows = []
        for p in persons:
            joints = []
            for j in range(NUM_JOINTS):
                c = p.joints.get(j)
                joints.append(None if c is None else [float(c.x), float(c.y), float(c.score)])
            rows.append({
                "score": float(p.score),
                "centroid": [float(p.centroid[0]), float(p.centroid[1])],
                "joints": joints,
            })
        out.append({"id": image_id, "persons": rows})
    return {"images": out}


def doc_to_pose_lists(doc: dict, schema_check=True) -> Dict[str, list]:
    """Pose JSON as {image id: [16-entry joint lists]} for the evaluator."""
    if schema_check:
        validate_poses(doc)
    out = {}
    for img in doc["images"]:
        out[img["id"]] = [person["joints"] for person in img["persons"]]
    return out


def dump_json(doc: dict, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
