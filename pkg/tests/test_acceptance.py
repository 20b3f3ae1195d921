"""End-to-end checks of the package's headline claims.

Each test prints one `[acceptance] name: PASS/FAIL` line (with capture
suspended so the line always reaches the terminal) and then asserts.
"""

import math
import time
from fractions import Fraction

import numpy as np

from oracles import central_difference_grad, conv2d_naive
from poseforge.codec import (
    CodecConfig,
    compute_centroid,
    encode_annotation,
    make_tree,
    mse_loss,
    smooth_l1_loss,
)
from poseforge.costs import format_ratio, network_cost, separable_ratio
from poseforge.decoder import DecodeConfig, decode_poses
from poseforge.graph import MixDepthwise, forward, init_node, split_channels
from poseforge.metrics import evaluate
from poseforge.network import build_network, forward_network, plan_for_arch
from poseforge.selftest import run_selftest
from poseforge.synth import SceneConfig, generate_scene, perturb_maps
from poseforge.tensor import ConvWeights, FlopCounter, Tensor, conv2d

TREES = ("flat", "hier")


def report(capsys, name, ok, detail):
    line = f"[acceptance] {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    with capsys.disabled():
        print(line, flush=True)
    return line


def test_cost_table_within_tolerance(capsys):
    targets = {
        "orig": (26.0e6, 26.2e9),
        "ds": (4.2e6, 4.7e9),
        "mix": (4.6e6, 4.8e9),
        "ds-star": (2.9e6, 3.3e9),
        "ds-nose": (2.9e6, 4.7e9),
    }
    t0 = time.time()
    rows = {}
    for arch in targets:
        net = build_network(plan_for_arch(arch, stages=8, input_size=256))
        rep = network_cost(net)
        rows[arch] = (rep.total_params, rep.total_flops)
    elapsed = time.time() - t0

    parts, ok = [], True
    for arch, (tp, tf) in targets.items():
        p, f = rows[arch]
        dp, df = p / tp - 1.0, f / tf - 1.0
        good = abs(dp) <= 0.15 and abs(df) <= 0.15
        ok &= good
        parts.append(f"{arch} {p / 1e6:.2f}M/{f / 1e9:.2f}G "
                     f"{dp:+.1%}/{df:+.1%}{'' if good else ' OUT'}")
    ordered = (rows["ds"][0] < rows["mix"][0]
               and rows["orig"][0] > 3 * rows["mix"][0])
    ok &= ordered and elapsed < 1.0
    detail = "; ".join(parts) + f"; ordering {'ok' if ordered else 'BROKEN'}; {elapsed:.2f}s"
    line = report(capsys, "cost table within 15%", ok, detail)
    assert ok, line


def test_separable_cost_ratio(capsys):
    ratio = separable_ratio(3, 128)
    shown = format_ratio(ratio)
    ok = ratio == Fraction(137, 1152) and "~ 1/9" in shown
    line = report(capsys, "separable conv ratio", ok, f"{shown}")
    assert ok, line


def test_noiseless_round_trip(capsys):
    t0 = time.time()
    config = SceneConfig()        # 1-5 persons, separation well above 2*tau*stride
    codec = CodecConfig()
    worst = 0.0
    partitions_ok = 0
    scenes = 0
    preds = {tree: {} for tree in TREES}
    gts = []
    for seed in range(100):
        ann = generate_scene(config, seed)
        gts.append(ann)
        centroids = np.array([compute_centroid(p) for p in ann.persons])
        for tree in TREES:
            maps = encode_annotation(ann, make_tree(tree), codec)
            persons = decode_poses(maps, DecodeConfig(tree=tree))
            scenes += 1
            matched = set()
            clean = len(persons) == len(ann.persons)
            rows = []
            for p in persons:
                d = np.hypot(centroids[:, 0] - p.centroid[0],
                             centroids[:, 1] - p.centroid[1])
                gi = int(np.argmin(d))
                matched.add(gi)
                clean &= len(p.joints) == 16
                gt = ann.persons[gi]
                for j, cand in p.joints.items():
                    err = max(abs(cand.x - gt.joints[j, 0]),
                              abs(cand.y - gt.joints[j, 1])) / codec.stride
                    worst = max(worst, err)
                rows.append([(c.x, c.y, c.score) if (c := p.joints.get(j)) else None
                             for j in range(16)])
            clean &= len(matched) == len(ann.persons)
            partitions_ok += clean
            preds[tree][ann.id] = rows
    means = {tree: evaluate(preds[tree], gts).mean for tree in TREES}
    elapsed = time.time() - t0
    ok = (partitions_ok == scenes and worst <= 0.5
          and all(m == 1.0 for m in means.values()) and elapsed < 30.0)
    detail = (f"{partitions_ok}/{scenes} partitions, worst error {worst:.4f} cells, "
              f"mean pckh flat {means['flat']:.3f} hier {means['hier']:.3f}, {elapsed:.1f}s")
    line = report(capsys, "noiseless round trip", ok, detail)
    assert ok, line


def test_hierarchical_grouping_beats_flat(capsys):
    # crowded scenes: centroid separation 3 output cells, offsets degraded
    # with noise that grows with vector length
    scene_cfg = SceneConfig(width=128, height=128, persons=(4, 6),
                            scale_range=(0.35, 0.5), min_separation=12.0,
                            margin=4.0, max_tries=2000)
    codec = CodecConfig(sigma=1.0, tau=1.0, stride=4)
    correct = {tree: 0 for tree in TREES}
    total = {tree: 0 for tree in TREES}
    for seed in range(1000):
        ann = generate_scene(scene_cfg, seed)
        centroids = np.array([compute_centroid(p) for p in ann.persons])
        gt_joints = np.stack([p.joints[:, :2] for p in ann.persons])  # (P, 16, 2)
        for tree in TREES:
            maps = encode_annotation(ann, make_tree(tree), codec)
            noisy = perturb_maps(maps, offset_noise=0.5, seed=seed)
            for p in decode_poses(noisy, DecodeConfig(tree=tree)):
                d = np.hypot(centroids[:, 0] - p.centroid[0],
                             centroids[:, 1] - p.centroid[1])
                gi = int(np.argmin(d))
                for j, cand in p.joints.items():
                    dj = np.hypot(gt_joints[:, j, 0] - cand.x,
                                  gt_joints[:, j, 1] - cand.y)
                    total[tree] += 1
                    correct[tree] += int(np.argmin(dj) == gi)
    acc = {tree: correct[tree] / total[tree] for tree in TREES}
    ok = acc["hier"] >= acc["flat"] and min(total.values()) > 10000
    line = report(capsys, "hierarchical beats flat under noise", ok,
                  f"hier {acc['hier']:.4f} vs flat {acc['flat']:.4f} "
                  f"over {total['flat']} joint assignments")
    assert ok, line


def test_loss_gradients_match_finite_differences(capsys):
    rng = np.random.default_rng(515)
    worst = 0.0
    for _ in range(50):
        gt = rng.normal(size=(2, 4, 5))
        # keep |pred - gt| away from 1.0, where the smooth L1 second
        # derivative jumps and finite differences go sour
        band = np.where(rng.random(gt.shape) < 0.5,
                        rng.uniform(0.0, 0.8, gt.shape),
                        rng.uniform(1.2, 3.0, gt.shape))
        pred = gt + np.sign(rng.normal(size=gt.shape)) * band
        for loss in (mse_loss, smooth_l1_loss):
            _, grad = loss(pred, gt)
            fd = central_difference_grad(lambda p: loss(p, gt)[0], pred, step=1e-3)
            rel = np.linalg.norm(grad - fd) / np.linalg.norm(fd)
            worst = max(worst, rel)
    ok = worst < 1e-4
    line = report(capsys, "loss gradients vs finite differences", ok,
                  f"worst relative error {worst:.2e} over 50 tensors x 2 losses")
    assert ok, line


def test_conv_matches_naive_oracle(capsys):
    rng = np.random.default_rng(2718)
    worst = 0.0
    for i in range(100):
        kind = ("conv", "depthwise", "mix")[i % 3]
        k = int(rng.choice([1, 3, 5]))
        h = int(rng.integers(k, 10))
        w = int(rng.integers(k, 10))
        n = int(rng.integers(1, 3))
        if kind == "mix":
            c = int(rng.integers(2, 9))
            x = Tensor.from_array(rng.normal(size=(n, c, h, w)))
            node = init_node(MixDepthwise("m", split_channels(c, 2), (3, 5)), rng)
            got = forward(node, x).data
            parts, start = [], 0
            for wts, width in zip(node.weights, node.split):
                stop = start + width
                parts.append(conv2d_naive(x.data[:, start:stop], wts.kernel,
                                          padding=wts.padding, groups=width))
                start = stop
            want = np.concatenate(parts, axis=1)
        else:
            c_in = int(rng.integers(1, 9))
            stride = int(rng.choice([1, 2]))
            padding = int(rng.choice([0, k // 2]))
            if kind == "depthwise":
                c_out, groups = c_in, c_in
            else:
                c_out, groups = int(rng.integers(1, 9)), 1
            kernel = rng.normal(size=(c_out, c_in // groups, k, k)).astype(np.float32)
            bias = rng.normal(size=c_out).astype(np.float32) if rng.random() < 0.5 else None
            x = Tensor.from_array(rng.normal(size=(n, c_in, h, w)))
            wts = ConvWeights(kernel, bias, stride, padding, groups)
            got = conv2d(x, wts).data
            want = conv2d_naive(x.data, kernel, bias, stride, padding, groups)
        worst = max(worst, float(np.abs(got - want).max()))
    ok = worst <= 1e-5
    line = report(capsys, "convolution vs naive oracle", ok,
                  f"max abs diff {worst:.2e} over 100 shapes")
    assert ok, line


def test_instrumented_forward_matches_static_count(capsys):
    net = build_network(plan_for_arch("ds", stages=1, input_size=256), seed=7)
    x = Tensor.from_array(np.random.default_rng(0).uniform(0.0, 1.0, (1, 3, 256, 256)))
    counter = FlopCounter()
    forward_network(net, x, counter)
    results = {}
    for include in (True, False):
        static = network_cost(net, include_elementwise=include).total_flops
        results[include] = (counter.total(include_elementwise=include), static)
    ok = all(got == want for got, want in results.values())
    line = report(capsys, "instrumented forward equals static count", ok,
                  f"with elementwise {results[True][0]} == {results[True][1]}, "
                  f"without {results[False][0]} == {results[False][1]}")
    assert ok, line


def test_invariant_selftest(capsys):
    ok = run_selftest() == 0
    line = report(capsys, "invariant selftest", ok, "all checks green" if ok else "see output")
    assert ok, line
