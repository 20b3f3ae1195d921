"""Stacked hourglass networks built from the residual block variants.

Topology, fixed up to the block kind and stage count:

  stem    7x7 stride-2 conv (3 -> c/2), one block at c/2, maxpool,
          1x1 widening conv (c/2 -> c), two blocks at c
  module  recursive encoder-decoder; at every depth a skip block runs in
          parallel with [maxpool -> block -> (recurse | block) -> block
          -> nearest upsample], branches summed
  stage   module -> feature block -> two parallel 1x1 heads (score maps
          for J joints + 1 centroid channel, and 2(J+1) offset channels)
  merge   between stages, features and both head outputs are remapped by
          1x1 convs and added back onto the stage input

The spatial stride from image to maps is 4.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .blocks import BlockSpec, build_block
from .graph import (
    Act,
    Conv,
    MixDepthwise,
    Norm,
    Resample,
    Seq,
    SqueezeExcite,
    SumBranches,
    forward,
    init_node,
    iter_nodes,
    named_parameters,
    named_state,
)
from .tensor import BatchNormParams, ConvWeights, FlopCounter, ShapeError, Tensor

OUTPUT_STRIDE = 4

ARCHS = {
    "orig": dict(kind="bottleneck_a", channels=256),
    "basic": dict(kind="basic_b", channels=128),
    "ds": dict(kind="ds_c", channels=128),
    "ds-star": dict(kind="ds_c", channels=128, units=1),
    "ds-nose": dict(kind="ds_c", channels=128, use_se=False),
    "mix": dict(kind="mix_d", channels=128),
}


@dataclass(frozen=True)
class NetworkPlan:
    block: BlockSpec = field(default_factory=BlockSpec)
    stages: int = 8
    levels: int = 4
    joints: int = 16
    input_size: int = 256

    def __post_init__(self):
        if self.stages < 1:
            raise ValueError(f"stages must be >= 1, got {self.stages}")
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.joints < 1:
            raise ValueError(f"joints must be >= 1, got {self.joints}")
        if self.input_size % OUTPUT_STRIDE:
            raise ValueError(f"input_size must be divisible by {OUTPUT_STRIDE}, got {self.input_size}")
        grid = self.input_size // OUTPUT_STRIDE
        if grid % (1 << self.levels):
            raise ValueError(
                f"map size {grid} not divisible by 2^levels={1 << self.levels}; "
                "pick a larger input or fewer levels"
            )

    @property
    def channels(self):
        return self.block.channels

    @property
    def grid_size(self):
        return self.input_size // OUTPUT_STRIDE

    @property
    def map_channels(self):
        return self.joints + 1


def plan_for_arch(arch: str, stages=8, input_size=256, levels=4, joints=16) -> NetworkPlan:
    if arch not in ARCHS:
        raise ValueError(f"unknown arch {arch!r}, expected one of {sorted(ARCHS)}")
    return NetworkPlan(BlockSpec(**ARCHS[arch]), stages=stages, levels=levels,
                       joints=joints, input_size=input_size)


@dataclass
class Merge:
    feat_remap: Conv
    heat_remap: Conv
    off_remap: Conv


@dataclass
class Stage:
    module: SumBranches
    feature: SumBranches
    heat_head: Conv
    off_head: Conv
    merge: Optional[Merge]


@dataclass
class Network:
    plan: NetworkPlan
    stem: Seq
    stages: List[Stage]


def build_hourglass_module(levels: int, spec: BlockSpec, name="hg") -> SumBranches:
    """One encoder-decoder module; shape-preserving for divisible inputs."""
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    skip = build_block(spec, "skip")
    if levels == 1:
        mid = build_block(spec, "innermost")
    else:
        mid = build_hourglass_module(levels - 1, spec, "sub")
    main = Seq("main", [
        Resample("down", "maxpool2"),
        build_block(spec, "pre"),
        mid,
        build_block(spec, "post"),
        Resample("up", "upnearest2"),
    ])
    return SumBranches(name, [skip, main])


def _stem(plan: NetworkPlan) -> Seq:
    c = plan.channels
    half = c // 2
    spec = plan.block
    return Seq("stem", [
        Conv("conv7", 3, half, 7, stride=2, padding=3),
        Norm("bn7", half),
        Act("relu7", "relu"),
        build_block(spec.with_channels(half), "block1"),
        Resample("pool", "maxpool2"),
        Conv("widen", half, c, 1),
        Norm("bnw", c),
        Act("reluw", "relu"),
        build_block(spec, "block2"),
        build_block(spec, "block3"),
    ])


def build_network(plan: NetworkPlan, seed: Optional[int] = None) -> Network:
    """Assemble the graph; weights are materialized only when seed is given.

    An unweighted network supports cost accounting but not forward passes.
    """
    c = plan.channels
    maps = plan.map_channels
    stages = []
    for i in range(plan.stages):
        merge = None
        if i + 1 < plan.stages:
            merge = Merge(
                feat_remap=Conv("merge_feat", c, c, 1, bias=True),
                heat_remap=Conv("merge_heat", maps, c, 1, bias=True),
                off_remap=Conv("merge_off", 2 * maps, c, 1, bias=True),
            )
        stages.append(Stage(
            module=build_hourglass_module(plan.levels, plan.block, "module"),
            feature=build_block(plan.block, "feature"),
            heat_head=Conv("heat", c, maps, 1, bias=True),
            off_head=Conv("off", c, 2 * maps, 1, bias=True),
            merge=merge,
        ))
    net = Network(plan=plan, stem=_stem(plan), stages=stages)
    if seed is not None:
        rng = np.random.default_rng(seed)
        for _, node in iter_network_parts(net):
            init_node(node, rng)
    return net


def iter_network_parts(net: Network):
    """(prefix, node) for every top-level graph in forward order."""
    yield "", net.stem
    for i, stage in enumerate(net.stages):
        prefix = f"stage{i}"
        yield prefix, stage.module
        yield prefix, stage.feature
        yield prefix, stage.heat_head
        yield prefix, stage.off_head
        if stage.merge is not None:
            yield prefix, stage.merge.feat_remap
            yield prefix, stage.merge.heat_remap
            yield prefix, stage.merge.off_remap


def network_named_state(net: Network):
    for prefix, node in iter_network_parts(net):
        yield from named_state(node, prefix)


def network_parameter_count(net: Network) -> int:
    return sum(int(a.size) for prefix, node in iter_network_parts(net)
               for _, a in named_parameters(node, prefix))


def forward_network(net: Network, image: Tensor, counter: Optional[FlopCounter] = None):
    """Run all stages; returns a list of (heatmaps, offsets) Tensor pairs.

    Input must be (n, 3, S, S) with S = plan.input_size.
    """
    plan = net.plan
    if image.c != 3 or image.h != plan.input_size or image.w != plan.input_size:
        raise ShapeError(
            f"expected input (n, 3, {plan.input_size}, {plan.input_size}), got {image.shape}"
        )
    x = forward(net.stem, image, counter)
    outputs = []
    for stage in net.stages:
        hidden = forward(stage.module, x, counter)
        feat = forward(stage.feature, hidden, counter)
        heat = forward(stage.heat_head, feat, counter)
        off = forward(stage.off_head, feat, counter)
        outputs.append((heat, off))
        if stage.merge is not None:
            fr = forward(stage.merge.feat_remap, feat, counter)
            hr = forward(stage.merge.heat_remap, heat, counter)
            orr = forward(stage.merge.off_remap, off, counter)
            acc = (x.data.astype(np.float64) + fr.data.astype(np.float64)
                   + hr.data.astype(np.float64) + orr.data.astype(np.float64))
            if counter is not None:
                counter.add_elementwise(3 * x.data.size)
            x = Tensor(acc.astype(np.float32))
    return outputs


def save_weights(net: Network, path):
    from .dshg import write_dshg
    write_dshg(path, dict(network_named_state(net)))


def load_weights(net: Network, path):
    """Fill an (possibly unweighted) network from a saved state file."""
    from .dshg import read_dshg
    arrays = read_dshg(path)
    expected = _expected_state_shapes(net)
    missing = sorted(set(expected) - set(arrays))
    extra = sorted(set(arrays) - set(expected))
    if missing or extra:
        raise ValueError(f"weight file mismatch: missing={missing[:5]} extra={extra[:5]}")
    for name, shape in expected.items():
        if tuple(arrays[name].shape) != shape:
            raise ValueError(f"weight {name}: expected shape {shape}, got {arrays[name].shape}")
    _assign_state(net, arrays)
    return net


def _expected_state_shapes(net: Network):
    shapes = {}
    for prefix, root in iter_network_parts(net):
        for path, node in iter_nodes(root, prefix):
            if isinstance(node, Conv):
                cpg = node.c_in // node.groups
                shapes[f"{path}.kernel"] = (node.c_out, cpg, node.k, node.k)
                if node.bias:
                    shapes[f"{path}.bias"] = (node.c_out,)
            elif isinstance(node, Norm):
                for part in ("mean", "var", "gamma", "beta"):
                    shapes[f"{path}.{part}"] = (node.channels,)
            elif isinstance(node, SqueezeExcite):
                r = node.reduced
                shapes[f"{path}.w1"] = (r, node.channels)
                shapes[f"{path}.b1"] = (r,)
                shapes[f"{path}.w2"] = (node.channels, r)
                shapes[f"{path}.b2"] = (node.channels,)
            elif isinstance(node, MixDepthwise):
                for i, (width, k) in enumerate(zip(node.split, node.kernels)):
                    shapes[f"{path}.kernel{i}"] = (width, 1, k, k)
    return shapes


def _assign_state(net: Network, arrays):
    for prefix, root in iter_network_parts(net):
        for path, node in iter_nodes(root, prefix):
            if isinstance(node, Conv):
                bias = arrays.get(f"{path}.bias") if node.bias else None
                node.weights = ConvWeights(arrays[f"{path}.kernel"], bias,
                                           node.stride, node.padding, node.groups)
            elif isinstance(node, Norm):
                node.params = BatchNormParams(
                    mean=arrays[f"{path}.mean"], var=arrays[f"{path}.var"],
                    gamma=arrays[f"{path}.gamma"], beta=arrays[f"{path}.beta"],
                )
            elif isinstance(node, SqueezeExcite):
                node.w1 = arrays[f"{path}.w1"]
                node.b1 = arrays[f"{path}.b1"]
                node.w2 = arrays[f"{path}.w2"]
                node.b2 = arrays[f"{path}.b2"]
            elif isinstance(node, MixDepthwise):
                ws = []
                for i, (width, k) in enumerate(zip(node.split, node.kernels)):
                    ws.append(ConvWeights(arrays[f"{path}.kernel{i}"], None, 1, k // 2, width))
                node.weights = ws
