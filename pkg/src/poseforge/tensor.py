"""Dense rank-4 tensors and the handful of operations the networks need.

Layout is fixed: (batch, channel, height, width), row-major float32.
Convolution accumulates in float64 and casts to float32 on store so that
128-channel reductions stay reproducible bit for bit between runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class ShapeError(ValueError):
    """Raised when an operation receives tensors of incompatible shape."""


def _as_f32(a):
    a = np.asarray(a, dtype=np.float32)
    return np.ascontiguousarray(a)


@dataclass(frozen=True)
class Tensor:
    """Minimal dense tensor: float32 data with shape (n, c, h, w)."""

    data: np.ndarray

    def __post_init__(self):
        arr = self.data
        if not isinstance(arr, np.ndarray) or arr.ndim != 4:
            raise ShapeError(f"tensor data must be a rank-4 array, got {getattr(arr, 'shape', None)}")
        if arr.dtype != np.float32 or not arr.flags.c_contiguous:
            object.__setattr__(self, "data", _as_f32(arr))

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def c(self):
        return self.data.shape[1]

    @property
    def h(self):
        return self.data.shape[2]

    @property
    def w(self):
        return self.data.shape[3]

    @property
    def shape(self):
        return self.data.shape

    @staticmethod
    def zeros(n, c, h, w):
        return Tensor(np.zeros((n, c, h, w), dtype=np.float32))

    @staticmethod
    def from_array(a):
        return Tensor(_as_f32(a))


@dataclass(frozen=True)
class ConvWeights:
    """Convolution weight bundle.

    kernel: (c_out, c_in // groups, k, k) float32
    bias:   (c_out,) float32 or None
    """

    kernel: np.ndarray
    bias: Optional[np.ndarray] = None
    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self):
        k = self.kernel
        if k.ndim != 4:
            raise ShapeError(f"kernel must be rank 4, got shape {k.shape}")
        if k.shape[2] != k.shape[3]:
            raise ShapeError(f"only square kernels supported, got {k.shape[2]}x{k.shape[3]}")
        if k.shape[2] % 2 != 1:
            raise ShapeError(f"kernel size must be odd, got {k.shape[2]}")
        if self.groups < 1 or k.shape[0] % self.groups != 0:
            raise ShapeError(f"c_out={k.shape[0]} not divisible by groups={self.groups}")
        if self.stride < 1 or self.padding < 0:
            raise ShapeError("stride must be >= 1 and padding >= 0")
        if k.dtype != np.float32:
            object.__setattr__(self, "kernel", _as_f32(k))
        if self.bias is not None and self.bias.dtype != np.float32:
            object.__setattr__(self, "bias", _as_f32(self.bias))

    @property
    def c_out(self):
        return self.kernel.shape[0]

    @property
    def c_in(self):
        return self.kernel.shape[1] * self.groups

    @property
    def k(self):
        return self.kernel.shape[2]


@dataclass(frozen=True)
class BatchNormParams:
    """Inference-time batchnorm statistics and affine terms, one per channel."""

    mean: np.ndarray
    var: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    eps: float = 1e-5

    def __post_init__(self):
        c = self.mean.shape[0]
        for name in ("var", "gamma", "beta"):
            arr = getattr(self, name)
            if arr.ndim != 1 or arr.shape[0] != c:
                raise ShapeError(f"batchnorm {name} must have shape ({c},), got {arr.shape}")
        if np.any(self.var < 0):
            raise ValueError("batchnorm variance must be non-negative")

    @property
    def channels(self):
        return self.mean.shape[0]


@dataclass
class FlopCounter:
    """Running multiply-accumulate tally, split by op family.

    One fused multiply-add counts as a single flop.  Elementwise work
    (batchnorm, activations, pooling, residual adds, bias adds) is kept
    in its own bucket so reports can include or exclude it.
    """

    conv: int = 0
    dense: int = 0
    elementwise: int = 0

    def add_conv(self, n):
        self.conv += int(n)

    def add_dense(self, n):
        self.dense += int(n)

    def add_elementwise(self, n):
        self.elementwise += int(n)

    def total(self, include_elementwise=True):
        t = self.conv + self.dense
        if include_elementwise:
            t += self.elementwise
        return t


def conv_output_size(size, k, stride, padding):
    out = (size + 2 * padding - k) // stride + 1
    if out < 1:
        raise ShapeError(f"conv output collapsed: size={size} k={k} stride={stride} padding={padding}")
    return out


def _im2col(x, k, stride, padding):
    """Extract sliding patches: (n, c, h, w) -> (n, c, k, k, oh, ow)."""
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = conv_output_size(h, k, stride, padding)
    ow = conv_output_size(w, k, stride, padding)
    sn, sc, sh, sw = x.strides
    shape = (n, c, k, k, oh, ow)
    strides = (sn, sc, sh, sw, sh * stride, sw * stride)
    return np.lib.stride_tricks.as_strided(x, shape=shape, strides=strides), oh, ow


def conv2d(x: Tensor, weights: ConvWeights, counter: Optional[FlopCounter] = None) -> Tensor:
    """Grouped 2-D convolution with zero padding.

    Patches are gathered with stride tricks and reduced with a float64
    einsum, so the summation order per output element is fixed.
    """
    if x.c != weights.c_in:
        raise ShapeError(f"conv expects {weights.c_in} input channels, got {x.c}")
    g = weights.groups
    cpg = weights.c_in // g
    cog = weights.c_out // g
    k, stride, padding = weights.k, weights.stride, weights.padding
    cols, oh, ow = _im2col(x.data, k, stride, padding)
    # (n, g, cpg, k, k, oh, ow) x (g, cog, cpg, k, k) -> (n, g, cog, oh, ow)
    cols = cols.reshape(x.n, g, cpg, k, k, oh, ow).astype(np.float64)
    kern = weights.kernel.reshape(g, cog, cpg, k, k).astype(np.float64)
    out = np.einsum("ngikyhw,goiky->ngohw", cols, kern, optimize=True)
    out = out.reshape(x.n, weights.c_out, oh, ow)
    if weights.bias is not None:
        out = out + weights.bias.astype(np.float64)[None, :, None, None]
    if counter is not None:
        counter.add_conv(x.n * oh * ow * weights.c_out * cpg * k * k)
        if weights.bias is not None:
            counter.add_elementwise(x.n * oh * ow * weights.c_out)
    return Tensor(out.astype(np.float32))


def depthwise_conv2d(x: Tensor, weights: ConvWeights, counter: Optional[FlopCounter] = None) -> Tensor:
    """Convolution with one filter per channel (groups == c_in == c_out)."""
    if not (weights.groups == weights.c_in == weights.c_out):
        raise ShapeError(
            f"depthwise conv requires groups == c_in == c_out, got groups={weights.groups} "
            f"c_in={weights.c_in} c_out={weights.c_out}"
        )
    return conv2d(x, weights, counter)


def activation(x: Tensor, kind: str, counter: Optional[FlopCounter] = None) -> Tensor:
    if kind == "relu":
        out = np.maximum(x.data, np.float32(0))
    elif kind == "sigmoid":
        out = (1.0 / (1.0 + np.exp(-x.data.astype(np.float64)))).astype(np.float32)
    else:
        raise ValueError(f"unknown activation {kind!r}")
    if counter is not None:
        counter.add_elementwise(x.data.size)
    return Tensor(out)


def batchnorm_infer(x: Tensor, params: BatchNormParams, counter: Optional[FlopCounter] = None) -> Tensor:
    if x.c != params.channels:
        raise ShapeError(f"batchnorm expects {params.channels} channels, got {x.c}")
    scale = (params.gamma.astype(np.float64) / np.sqrt(params.var.astype(np.float64) + params.eps))
    shift = params.beta.astype(np.float64) - params.mean.astype(np.float64) * scale
    out = x.data.astype(np.float64) * scale[None, :, None, None] + shift[None, :, None, None]
    if counter is not None:
        counter.add_elementwise(x.data.size)
    return Tensor(out.astype(np.float32))


def resample(x: Tensor, mode: str, counter: Optional[FlopCounter] = None) -> Tensor:
    """Factor-2 resampling: "maxpool2" halves, "upnearest2" doubles."""
    if mode == "maxpool2":
        if x.h % 2 or x.w % 2:
            raise ShapeError(f"maxpool2 requires even spatial dims, got {x.h}x{x.w}")
        d = x.data
        out = np.maximum(
            np.maximum(d[:, :, 0::2, 0::2], d[:, :, 0::2, 1::2]),
            np.maximum(d[:, :, 1::2, 0::2], d[:, :, 1::2, 1::2]),
        )
    elif mode == "upnearest2":
        out = x.data.repeat(2, axis=2).repeat(2, axis=3)
    else:
        raise ValueError(f"unknown resample mode {mode!r}")
    if counter is not None:
        counter.add_elementwise(out.size)
    return Tensor(np.ascontiguousarray(out))


def global_avg_pool(x: Tensor, counter: Optional[FlopCounter] = None) -> np.ndarray:
    """Spatial mean per channel: (n, c, h, w) -> (n, c) float32."""
    out = x.data.astype(np.float64).mean(axis=(2, 3))
    if counter is not None:
        counter.add_elementwise(x.data.size)
    return out.astype(np.float32)


def fully_connected(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                    counter: Optional[FlopCounter] = None) -> np.ndarray:
    """Dense layer on (n, c_in) or (c_in,) vectors: y = x W^T + b."""
    squeeze = x.ndim == 1
    x2 = np.atleast_2d(x).astype(np.float64)
    if x2.shape[1] != weight.shape[1]:
        raise ShapeError(f"dense expects {weight.shape[1]} inputs, got {x2.shape[1]}")
    out = x2 @ weight.astype(np.float64).T + bias.astype(np.float64)
    if counter is not None:
        counter.add_dense(x2.shape[0] * weight.shape[0] * weight.shape[1])
        counter.add_elementwise(x2.shape[0] * weight.shape[0])
    out = out.astype(np.float32)
    return out[0] if squeeze else out
