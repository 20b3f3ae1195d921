"""Command line front end.

Subcommands cover the full round trip: ``synth`` writes annotation
JSON, ``encode`` turns annotations into training-target map containers,
``decode`` turns map containers back into pose JSON, ``eval`` scores
poses against annotations, ``count`` prints the cost table for an
architecture, ``infer`` runs a randomly initialised network forward,
and ``selftest`` runs the built-in invariant checks.

Set POSEFORGE_THREADS to parallelise per-image encode/decode work.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .codec import CodecConfig, GroundTruthMaps, encode_annotation, make_tree
from .costs import format_ratio, network_cost, separable_ratio
from .decoder import DecodeConfig, decode_poses
from .dshg import read_dshg, write_dshg
from .formats import (
    annotations_to_doc,
    doc_to_annotations,
    doc_to_pose_lists,
    dump_json,
    load_json,
    poses_to_doc,
)
from .metrics import evaluate
from .network import ARCHS, build_network, forward_network, load_weights, plan_for_arch
from .selftest import run_selftest
from .synth import SceneConfig, generate_scene
from .tensor import Tensor


def _thread_count() -> int:
    raw = os.environ.get("POSEFORGE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"POSEFORGE_THREADS must be an integer, got {raw!r}")
    return max(1, n)


def _map_images(fn, items):
    threads = _thread_count()
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _parse_person_range(raw: str):
    if "-" in raw:
        lo, hi = raw.split("-", 1)
        return (int(lo), int(hi))
    n = int(raw)
    return (n, n)


def _cmd_count(args) -> int:
    plan = plan_for_arch(args.arch, stages=args.stages, input_size=args.input)
    net = build_network(plan)
    report = network_cost(net, include_elementwise=not args.no_elementwise)
    if args.csv:
        sys.stdout.write(report.as_csv())
    elif args.summary:
        print(f"{args.arch}: params {report.total_params / 1e6:.2f}M, "
              f"flops {report.total_flops / 1e9:.2f}G")
    else:
        print(report.as_text(depth=args.depth))
    return 0


def _cmd_ratio(_args) -> int:
    print(format_ratio(separable_ratio(3, 128)))
    return 0


def _cmd_synth(args) -> int:
    config = SceneConfig(width=args.width, height=args.height,
                         persons=_parse_person_range(args.persons))
    scenes = [generate_scene(config, seed) for seed in range(args.seed, args.seed + args.count)]
    dump_json(annotations_to_doc(scenes), args.out)
    print(f"wrote {len(scenes)} scene(s) to {args.out}")
    return 0


def _cmd_encode(args) -> int:
    images = doc_to_annotations(load_json(args.ann))
    config = CodecConfig(sigma=args.sigma, tau=args.tau, stride=args.stride)
    tree = make_tree(args.tree)

    def encode_one(ann):
        maps = encode_annotation(ann, tree, config)
        return ann.id, maps

    tensors = [("meta", np.array([config.sigma, config.tau, config.stride], dtype=np.float32))]
    for image_id, maps in _map_images(encode_one, images):
        tensors.append((f"{image_id}.heatmaps", maps.heatmaps))
        tensors.append((f"{image_id}.offsets", maps.offsets))
    write_dshg(args.out, tensors)
    print(f"encoded {len(images)} image(s) to {args.out}")
    return 0


def _read_map_container(path):
    tensors = dict(read_dshg(path))
    sigma, tau, stride = 2.0, 3.0, 4
    if "meta" in tensors:
        meta = tensors.pop("meta")
        sigma, tau, stride = float(meta[0]), float(meta[1]), int(meta[2])
    by_image = {}
    for name, arr in tensors.items():
        if "." not in name:
            raise ValueError(f"unrecognised tensor {name!r} in map container")
        image_id, kind = name.rsplit(".", 1)
        by_image.setdefault(image_id, {})[kind] = arr
    out = {}
    for image_id, parts in by_image.items():
        if set(parts) != {"heatmaps", "offsets"}:
            raise ValueError(f"image {image_id!r} needs both heatmaps and offsets")
        out[image_id] = GroundTruthMaps(heatmaps=parts["heatmaps"], offsets=parts["offsets"],
                                        sigma=sigma, tau=tau, stride=stride)
    return out


def _cmd_decode(args) -> int:
    maps_by_image = _read_map_container(args.maps)
    config = DecodeConfig(thresh=args.thresh, tree=args.tree,
                          refine=args.refine_peaks, spawn=args.spawn)
    ids = sorted(maps_by_image)
    decoded = _map_images(lambda i: decode_poses(maps_by_image[i], config), ids)
    dump_json(poses_to_doc(dict(zip(ids, decoded))), args.out)
    print(f"decoded {len(ids)} image(s) to {args.out}")
    return 0


def _cmd_infer(args) -> int:
    plan = plan_for_arch(args.arch, stages=args.stages, input_size=args.input)
    net = build_network(plan, seed=args.seed)
    if args.weights:
        load_weights(net, args.weights)
    rng = np.random.default_rng(args.seed)
    tensors = [("meta", np.array([2.0, 3.0, plan.input_size // plan.grid_size],
                                 dtype=np.float32))]
    for i in range(args.count):
        image = Tensor.from_array(
            rng.uniform(0.0, 1.0, size=(1, 3, plan.input_size, plan.input_size)))
        heat, off = forward_network(net, image)[-1]
        image_id = f"input-{i:06d}"
        tensors.append((f"{image_id}.heatmaps", heat.data[0]))
        tensors.append((f"{image_id}.offsets", off.data[0]))
    write_dshg(args.out, tensors)
    print(f"ran {args.count} forward pass(es), wrote maps to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    preds = doc_to_pose_lists(load_json(args.pred))
    gts = doc_to_annotations(load_json(args.gt))
    report = evaluate(preds, gts, metric=args.metric, alpha=args.alpha)
    print(report.as_text())
    return 0


def _cmd_selftest(_args) -> int:
    return run_selftest()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poseforge")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("count", help="print the parameter/flop table for an architecture")
    p.add_argument("--arch", choices=sorted(ARCHS), default="ds")
    p.add_argument("--stages", type=int, default=8)
    p.add_argument("--input", type=int, default=256)
    p.add_argument("--depth", type=int, default=2, help="name depth for row aggregation")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--summary", action="store_true", help="print only the totals line")
    p.add_argument("--no-elementwise", action="store_true",
                   help="count only conv/dense multiply-accumulates")
    p.set_defaults(func=_cmd_count)

    p = sub.add_parser("ratio", help="print the separable/standard conv cost ratio")
    p.set_defaults(func=_cmd_ratio)

    p = sub.add_parser("synth", help="generate synthetic scene annotations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--persons", default="1-5", help="person count or range, e.g. 3 or 1-5")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("encode", help="render annotations to target maps")
    p.add_argument("--ann", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--tau", type=float, default=3.0)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--tree", choices=("flat", "hier"), default="hier")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("decode", help="extract grouped poses from target maps")
    p.add_argument("--maps", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--thresh", type=float, default=0.1)
    p.add_argument("--tree", choices=("flat", "hier"), default="hier")
    p.add_argument("--refine-peaks", action="store_true")
    p.add_argument("--spawn", action="store_true",
                   help="open a new person when no centroid is within reach")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("infer", help="run a randomly initialised network on random inputs")
    p.add_argument("--arch", choices=sorted(ARCHS), default="ds")
    p.add_argument("--stages", type=int, default=2)
    p.add_argument("--input", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--weights", help="optional weight container to load")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("eval", help="score predicted poses against annotations")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--metric", choices=("pckh", "pck@0.2"), default="pckh")
    p.add_argument("--alpha", type=float, default=None,
                   help="threshold multiplier; defaults to the metric's standard value")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("selftest", help="run the built-in invariant checks")
    p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
