"""Static parameter and flop accounting over layer graphs.

Counts follow one convention throughout: a fused multiply-add is one
flop, batchnorm / activations / pooling / residual and bias adds are
"elementwise" work charged at one flop per output element, and reports
can include or exclude the elementwise bucket.  The runtime counter in
`tensor.FlopCounter` applies the same rules during an actual forward
pass, which gives two independent walks of the same graph to compare.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Tuple

from .graph import (
    Act,
    Conv,
    MixDepthwise,
    Norm,
    Resample,
    Seq,
    SqueezeExcite,
    SumBranches,
)
from .tensor import ShapeError, conv_output_size

Shape = Tuple[int, int, int]  # (channels, height, width)


@dataclass(frozen=True)
class CostRow:
    name: str
    params: int
    flops: int


@dataclass
class CostReport:
    rows: List[CostRow] = field(default_factory=list)
    include_elementwise: bool = True

    @property
    def total_params(self):
        return sum(r.params for r in self.rows)

    @property
    def total_flops(self):
        return sum(r.flops for r in self.rows)

    def aggregated(self, depth):
        """Collapse rows to the first `depth` dotted name components."""
        order = []
        sums = {}
        for r in self.rows:
            key = ".".join(r.name.split(".")[:depth])
            if key not in sums:
                sums[key] = [0, 0]
                order.append(key)
            sums[key][0] += r.params
            sums[key][1] += r.flops
        return [CostRow(k, *sums[k]) for k in order]

    def as_text(self, depth: Optional[int] = None):
        rows = self.rows if depth is None else self.aggregated(depth)
        name_w = max([len("layer")] + [len(r.name) for r in rows])
        lines = [f"{'layer':<{name_w}}  {'params':>12}  {'flops':>15}"]
        for r in rows:
            lines.append(f"{r.name:<{name_w}}  {r.params:>12}  {r.flops:>15}")
        lines.append(f"{'total':<{name_w}}  {self.total_params:>12}  {self.total_flops:>15}")
        lines.append(
            f"{'':<{name_w}}  {format_params(self.total_params):>12}  "
            f"{format_flops(self.total_flops):>15}"
        )
        return "\n".join(lines)

    def as_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["layer", "params", "flops"])
        for r in self.rows:
            writer.writerow([r.name, r.params, r.flops])
        writer.writerow(["total", self.total_params, self.total_flops])
        return buf.getvalue()


def format_params(n):
    return f"{n / 1e6:.1f}M"


def format_flops(n):
    return f"{n / 1e9:.1f}G"


def _conv_cost(node: Conv, shape: Shape):
    c, h, w = shape
    if c != node.c_in:
        raise ShapeError(f"{node.name}: expected {node.c_in} channels, got {c}")
    oh = conv_output_size(h, node.k, node.stride, node.padding)
    ow = conv_output_size(w, node.k, node.stride, node.padding)
    cpg = node.c_in // node.groups
    params = node.c_out * cpg * node.k * node.k + (node.c_out if node.bias else 0)
    conv_flops = oh * ow * node.c_out * cpg * node.k * node.k
    elem = oh * ow * node.c_out if node.bias else 0
    return params, conv_flops, elem, (node.c_out, oh, ow)


def collect_cost(node, shape: Shape, prefix=""):
    """Cost rows for a node tree given its input shape: ([(name, params, mac, elem)], out_shape)."""
    path = node.name if prefix == "" else f"{prefix}.{node.name}"
    c, h, w = shape
    if isinstance(node, Conv):
        params, mac, elem, out = _conv_cost(node, shape)
        return [(path, params, mac, elem)], out
    if isinstance(node, Norm):
        if c != node.channels:
            raise ShapeError(f"{path}: expected {node.channels} channels, got {c}")
        return [(path, 2 * node.channels, 0, c * h * w)], shape
    if isinstance(node, Act):
        return [(path, 0, 0, c * h * w)], shape
    if isinstance(node, Resample):
        if node.mode == "maxpool2":
            if h % 2 or w % 2:
                raise ShapeError(f"{path}: maxpool2 requires even dims, got {h}x{w}")
            out = (c, h // 2, w // 2)
        else:
            out = (c, h * 2, w * 2)
        return [(path, 0, 0, out[0] * out[1] * out[2])], out
    if isinstance(node, SqueezeExcite):
        if c != node.channels:
            raise ShapeError(f"{path}: expected {node.channels} channels, got {c}")
        r = node.reduced
        params = c * r + r + r * c + c
        dense = c * r + r * c
        elem = 2 * c * h * w + 2 * r + 2 * c
        return [(path, params, dense, elem)], shape
    if isinstance(node, MixDepthwise):
        if c != sum(node.split):
            raise ShapeError(f"{path}: expected {sum(node.split)} channels, got {c}")
        params = sum(width * k * k for width, k in zip(node.split, node.kernels))
        mac = h * w * params
        return [(path, params, mac, 0)], shape
    if isinstance(node, Seq):
        rows = []
        cur = shape
        for child in node.children:
            child_rows, cur = collect_cost(child, cur, path)
            rows.extend(child_rows)
        return rows, cur
    if isinstance(node, SumBranches):
        rows = []
        outs = []
        for branch in node.branches:
            branch_rows, bout = collect_cost(branch, shape, path)
            rows.extend(branch_rows)
            outs.append(bout)
        if len(set(outs)) != 1:
            raise ShapeError(f"{path}: branch outputs disagree: {outs}")
        out = outs[0]
        rows.append((f"{path}.add", 0, 0, (len(outs) - 1) * out[0] * out[1] * out[2]))
        return rows, out
    raise TypeError(f"unknown node type {type(node).__name__}")


def layer_cost(node, in_shape: Shape, include_elementwise=True):
    """Total (params, flops) of one node tree for the given input shape."""
    rows, _ = collect_cost(node, in_shape)
    params = sum(r[1] for r in rows)
    flops = sum(r[2] for r in rows)
    if include_elementwise:
        flops += sum(r[3] for r in rows)
    return params, flops


def output_shape(node, in_shape: Shape) -> Shape:
    _, out = collect_cost(node, in_shape)
    return out


def separable_ratio(k=3, c=128) -> Fraction:
    """Cost of a depthwise separable conv relative to a standard one.

    Holds for both parameters and flops when input and output widths are
    equal: (k^2 + c) / (k^2 * c).
    """
    return Fraction(k * k + c, k * k * c)


def format_ratio(ratio: Fraction):
    # smallest n with 1/n <= ratio, e.g. 137/1152 -> "~ 1/9"
    approx = math.ceil(1 / ratio)
    return f"{ratio.numerator}/{ratio.denominator} (~ 1/{approx})"


def network_cost(net, include_elementwise=True) -> CostReport:
    """Walk a built network's graph and sum per-layer costs.

    Mirrors `network.forward_network` step for step, including the
    remap-and-add merges between stages.
    """
    plan = net.plan
    rows = []

    def push(raw_rows):
        for name, params, mac, elem in raw_rows:
            flops = mac + (elem if include_elementwise else 0)
            rows.append(CostRow(name, params, flops))

    stem_rows, shape = collect_cost(net.stem, (3, plan.input_size, plan.input_size))
    push(stem_rows)
    for i, stage in enumerate(net.stages):
        prefix = f"stage{i}"
        r, fshape = collect_cost(stage.module, shape, prefix)
        push(r)
        r, fshape = collect_cost(stage.feature, fshape, prefix)
        push(r)
        r, heat_shape = collect_cost(stage.heat_head, fshape, prefix)
        push(r)
        r, off_shape = collect_cost(stage.off_head, fshape, prefix)
        push(r)
        if stage.merge is not None:
            r, m1 = collect_cost(stage.merge.feat_remap, fshape, prefix)
            push(r)
            r, m2 = collect_cost(stage.merge.heat_remap, heat_shape, prefix)
            push(r)
            r, m3 = collect_cost(stage.merge.off_remap, off_shape, prefix)
            push(r)
            if not (m1 == m2 == m3 == shape):
                raise ShapeError(f"{prefix}: merge shapes disagree")
            c, h, w = shape
            push([(f"{prefix}.merge_add", 0, 0, 3 * c * h * w)])
    return CostReport(rows, include_elementwise)
