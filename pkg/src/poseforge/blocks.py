"""Residual block variants used by the hourglass networks.

Four kinds are supported, all shape-preserving at stride 1:

  bottleneck_a  1x1 (c -> c/2), 3x3 (c/2), 1x1 (c/2 -> c), residual add
  basic_b       two 3x3 convolutions at width c, residual add
  ds_c          two depthwise separable units, channel gate, residual add
  mix_d         like ds_c but with mixed-kernel depthwise convs and an
                inner skip landing after the gate

Every conv is followed by batchnorm + relu and carries no bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

from .graph import (
    Act,
    Conv,
    MixDepthwise,
    Norm,
    Seq,
    SqueezeExcite,
    SumBranches,
    identity,
    split_channels,
)

BLOCK_KINDS = ("bottleneck_a", "basic_b", "ds_c", "mix_d")


@dataclass(frozen=True)
class BlockSpec:
    """Configuration for one residual block.

    units      number of separable units in ds_c / mix_d (1 or 2)
    use_se     include the squeeze-excitation gate (ds_c / mix_d only)
    inner_skip extra identity added around the second unit of mix_d
    mix_split  per-group channel widths; None means an equal split
    """

    kind: str = "ds_c"
    channels: int = 128
    se_ratio: int = 16
    units: int = 2
    use_se: bool = True
    inner_skip: bool = True
    mix_kernels: Tuple[int, ...] = (3, 5)
    mix_split: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.kind not in BLOCK_KINDS:
            raise ValueError(f"unknown block kind {self.kind!r}, expected one of {BLOCK_KINDS}")
        if self.channels < 2 or self.channels % 2:
            raise ValueError(f"channels must be even and >= 2, got {self.channels}")
        if self.se_ratio < 1:
            raise ValueError(f"se_ratio must be a positive integer, got {self.se_ratio}")
        if self.units not in (1, 2):
            raise ValueError(f"units must be 1 or 2, got {self.units}")
        if self.mix_split is not None:
            if len(self.mix_split) != len(self.mix_kernels):
                raise ValueError("mix_split and mix_kernels must have equal length")
            if sum(self.mix_split) != self.channels:
                raise ValueError(f"mix_split must sum to {self.channels}, got {sum(self.mix_split)}")
        if any(k % 2 == 0 for k in self.mix_kernels):
            raise ValueError("mix kernel sizes must be odd")

    def with_channels(self, channels):
        split = None
        if self.mix_split is not None:
            raise ValueError("cannot rescale a block with an explicit mix_split")
        return BlockSpec(self.kind, channels, self.se_ratio, self.units,
                         self.use_se, self.inner_skip, self.mix_kernels, split)

    def resolved_split(self):
        if self.mix_split is not None:
            return self.mix_split
        return split_channels(self.channels, len(self.mix_kernels))


def conv_bn_relu(name, c_in, c_out, k, stride=1):
    return Seq(name, [
        Conv("conv", c_in, c_out, k, stride=stride, padding=k // 2),
        Norm("bn", c_out),
        Act("relu", "relu"),
    ])


def build_se(channels, ratio, name="se"):
    return SqueezeExcite(name, channels, ratio)


def build_ds_unit(channels, k=3, name="unit"):
    """Depthwise separable unit: depthwise k -> bn -> relu -> 1x1 -> bn -> relu."""
    return Seq(name, [
        Conv("dw", channels, channels, k, padding=k // 2, groups=channels),
        Norm("bn1", channels),
        Act("relu1", "relu"),
        Conv("pw", channels, channels, 1),
        Norm("bn2", channels),
        Act("relu2", "relu"),
    ])


def build_mix_unit(spec: BlockSpec, name="unit"):
    """Separable unit whose depthwise stage mixes kernel sizes across groups."""
    c = spec.channels
    return Seq(name, [
        MixDepthwise("mixdw", spec.resolved_split(), spec.mix_kernels),
        Norm("bn1", c),
        Act("relu1", "relu"),
        Conv("pw", c, c, 1),
        Norm("bn2", c),
        Act("relu2", "relu"),
    ])


def build_block(spec: BlockSpec, name="block"):
    """Assemble one residual block as a node tree."""
    c = spec.channels
    if spec.kind == "bottleneck_a":
        m = c // 2
        body = Seq("body", [
            conv_bn_relu("squeeze", c, m, 1),
            conv_bn_relu("mid", m, m, 3),
            conv_bn_relu("expand", m, c, 1),
        ])
        return SumBranches(name, [identity(), body])

    if spec.kind == "basic_b":
        body = Seq("body", [
            conv_bn_relu("conv1", c, c, 3),
            conv_bn_relu("conv2", c, c, 3),
        ])
        return SumBranches(name, [identity(), body])

    if spec.kind == "ds_c":
        stages = [build_ds_unit(c, 3, f"unit{i + 1}") for i in range(spec.units)]
        if spec.use_se:
            stages.append(build_se(c, spec.se_ratio))
        return SumBranches(name, [identity(), Seq("body", stages)])

    # mix_d: first unit feeds both the second unit (+ gate) and, when the
    # inner skip is on, a parallel identity that lands after the gate.
    first = build_mix_unit(spec, "unit1")
    if spec.units == 1:
        tail = [build_se(c, spec.se_ratio)] if spec.use_se else []
        body = Seq("body", [first] + tail)
        return SumBranches(name, [identity(), body])
    second = [build_mix_unit(spec, "unit2")]
    if spec.use_se:
        second.append(build_se(c, spec.se_ratio))
    gated = Seq("gated", second)
    if spec.inner_skip:
        inner = SumBranches("inner", [identity(), gated])
    else:
        inner = gated
    body = Seq("body", [first, inner])
    return SumBranches(name, [identity(), body])
