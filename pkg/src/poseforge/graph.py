"""Layer graph shared by forward evaluation and cost accounting.

A network is a tree of the node types below.  Nodes are built unweighted
(counting mode) and weights are materialized later by `init_node`, so the
cost model and the runtime walk literally the same structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .tensor import (
    BatchNormParams,
    ConvWeights,
    FlopCounter,
    ShapeError,
    Tensor,
    activation,
    batchnorm_infer,
    conv2d,
    depthwise_conv2d,
    fully_connected,
    global_avg_pool,
    resample,
)


@dataclass
class Conv:
    name: str
    c_in: int
    c_out: int
    k: int
    stride: int = 1
    padding: int = 0
    groups: int = 1
    bias: bool = False
    weights: Optional[ConvWeights] = None


@dataclass
class Norm:
    name: str
    channels: int
    params: Optional[BatchNormParams] = None


@dataclass
class Act:
    name: str
    kind: str = "relu"


@dataclass
class Resample:
    name: str
    mode: str  # "maxpool2" | "upnearest2"


@dataclass
class SqueezeExcite:
    """Channel gate: GAP -> dense (c -> c/ratio) -> relu -> dense -> sigmoid -> scale."""

    name: str
    channels: int
    ratio: int = 16
    w1: Optional[np.ndarray] = None
    b1: Optional[np.ndarray] = None
    w2: Optional[np.ndarray] = None
    b2: Optional[np.ndarray] = None

    @property
    def reduced(self):
        return max(1, self.channels // self.ratio)


@dataclass
class MixDepthwise:
    """Depthwise conv with a different kernel size per channel group."""

    name: str
    split: Tuple[int, ...]
    kernels: Tuple[int, ...]
    weights: Optional[List[ConvWeights]] = None


@dataclass
class Seq:
    name: str
    children: list = field(default_factory=list)


@dataclass
class SumBranches:
    """Feeds the same input to every branch and sums the outputs."""

    name: str
    branches: list = field(default_factory=list)


Node = object  # any of the classes above


def identity(name="id"):
    return Seq(name, [])


def forward(node, x: Tensor, counter: Optional[FlopCounter] = None) -> Tensor:
    """Evaluate a node tree on x. Raises if the tree has no weights yet."""
    if isinstance(node, Conv):
        if node.weights is None:
            raise ValueError(f"node {node.name} has no weights; call init_node first")
        return conv2d(x, node.weights, counter)
    if isinstance(node, Norm):
        if node.params is None:
            raise ValueError(f"node {node.name} has no weights; call init_node first")
        return batchnorm_infer(x, node.params, counter)
    if isinstance(node, Act):
        return activation(x, node.kind, counter)
    if isinstance(node, Resample):
        return resample(x, node.mode, counter)
    if isinstance(node, SqueezeExcite):
        return _se_forward(node, x, counter)
    if isinstance(node, MixDepthwise):
        return _mix_forward(node, x, counter)
    if isinstance(node, Seq):
        for child in node.children:
            x = forward(child, x, counter)
        return x
    if isinstance(node, SumBranches):
        outs = [forward(b, x, counter) for b in node.branches]
        acc = outs[0].data.astype(np.float64)
        for o in outs[1:]:
            acc = acc + o.data.astype(np.float64)
        if counter is not None:
            counter.add_elementwise((len(outs) - 1) * outs[0].data.size)
        return Tensor(acc.astype(np.float32))
    raise TypeError(f"unknown node type {type(node).__name__}")


def _se_forward(node: SqueezeExcite, x: Tensor, counter) -> Tensor:
    if node.w1 is None:
        raise ValueError(f"node {node.name} has no weights; call init_node first")
    if x.c != node.channels:
        raise ShapeError(f"{node.name}: expected {node.channels} channels, got {x.c}")
    pooled = global_avg_pool(x, counter)                      # (n, c)
    hidden = fully_connected(pooled, node.w1, node.b1, counter)
    hidden = np.maximum(hidden, np.float32(0))
    if counter is not None:
        counter.add_elementwise(hidden.size)
    gate = fully_connected(hidden, node.w2, node.b2, counter)
    gate = (1.0 / (1.0 + np.exp(-gate.astype(np.float64))))   # (n, c)
    if counter is not None:
        counter.add_elementwise(gate.size)
        counter.add_elementwise(x.data.size)                  # per-channel rescale
    out = x.data.astype(np.float64) * gate[:, :, None, None]
    return Tensor(out.astype(np.float32))


def _mix_forward(node: MixDepthwise, x: Tensor, counter) -> Tensor:
    if node.weights is None:
        raise ValueError(f"node {node.name} has no weights; call init_node first")
    if x.c != sum(node.split):
        raise ShapeError(f"{node.name}: expected {sum(node.split)} channels, got {x.c}")
    outs = []
    start = 0
    for w, width in zip(node.weights, node.split):
        part = Tensor(np.ascontiguousarray(x.data[:, start:start + width]))
        outs.append(depthwise_conv2d(part, w, counter).data)
        start += width
    return Tensor(np.concatenate(outs, axis=1))


def split_channels(channels: int, num_groups: int) -> Tuple[int, ...]:
    """Equal split; any remainder goes to the first group."""
    base = channels // num_groups
    split = [base] * num_groups
    split[0] += channels - base * num_groups
    return tuple(split)


def iter_nodes(node, prefix=""):
    """Depth-first walk yielding (path, node) for every node in the tree."""
    path = f"{prefix}{node.name}" if prefix == "" else f"{prefix}.{node.name}"
    yield path, node
    if isinstance(node, Seq):
        for child in node.children:
            yield from iter_nodes(child, path)
    elif isinstance(node, SumBranches):
        for branch in node.branches:
            yield from iter_nodes(branch, path)


def named_parameters(node, prefix=""):
    """Learnable arrays in walk order: conv kernels/biases, norm scale/shift, SE dense."""
    for path, n in iter_nodes(node, prefix):
        if isinstance(n, Conv) and n.weights is not None:
            yield f"{path}.kernel", n.weights.kernel
            if n.weights.bias is not None:
                yield f"{path}.bias", n.weights.bias
        elif isinstance(n, Norm) and n.params is not None:
            yield f"{path}.gamma", n.params.gamma
            yield f"{path}.beta", n.params.beta
        elif isinstance(n, SqueezeExcite) and n.w1 is not None:
            yield f"{path}.w1", n.w1
            yield f"{path}.b1", n.b1
            yield f"{path}.w2", n.w2
            yield f"{path}.b2", n.b2
        elif isinstance(n, MixDepthwise) and n.weights is not None:
            for i, w in enumerate(n.weights):
                yield f"{path}.kernel{i}", w.kernel


def named_state(node, prefix=""):
    """All arrays needed to reproduce the forward pass, stats included."""
    for path, n in iter_nodes(node, prefix):
        if isinstance(n, Norm) and n.params is not None:
            yield f"{path}.mean", n.params.mean
            yield f"{path}.var", n.params.var
    yield from named_parameters(node, prefix)


def parameter_count(node):
    return sum(int(a.size) for _, a in named_parameters(node))


def _uniform(rng, shape, fan_in):
    limit = 1.0 / np.sqrt(max(1, fan_in))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def init_node(node, rng: np.random.Generator):
    """Materialize weights for every leaf, in deterministic walk order."""
    for _, n in iter_nodes(node):
        if isinstance(n, Conv):
            cpg = n.c_in // n.groups
            kernel = _uniform(rng, (n.c_out, cpg, n.k, n.k), cpg * n.k * n.k)
            bias = np.zeros(n.c_out, dtype=np.float32) if n.bias else None
            n.weights = ConvWeights(kernel, bias, n.stride, n.padding, n.groups)
        elif isinstance(n, Norm):
            c = n.channels
            n.params = BatchNormParams(
                mean=np.zeros(c, dtype=np.float32),
                var=np.ones(c, dtype=np.float32),
                gamma=np.ones(c, dtype=np.float32),
                beta=np.zeros(c, dtype=np.float32),
            )
        elif isinstance(n, SqueezeExcite):
            c, r = n.channels, n.reduced
            n.w1 = _uniform(rng, (r, c), c)
            n.b1 = np.zeros(r, dtype=np.float32)
            n.w2 = _uniform(rng, (c, r), r)
            n.b2 = np.zeros(c, dtype=np.float32)
        elif isinstance(n, MixDepthwise):
            ws = []
            for width, k in zip(n.split, n.kernels):
                kernel = _uniform(rng, (width, 1, k, k), k * k)
                ws.append(ConvWeights(kernel, None, 1, k // 2, width))
            n.weights = ws
    return node
