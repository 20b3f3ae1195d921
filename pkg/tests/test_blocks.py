"""Residual block variants: structure, algebra, and parameter counts."""

import numpy as np
import pytest

from poseforge.blocks import BLOCK_KINDS, BlockSpec, build_block, build_ds_unit, build_se
from poseforge.costs import layer_cost
from poseforge.graph import (
    Conv,
    MixDepthwise,
    Norm,
    SqueezeExcite,
    forward,
    init_node,
    iter_nodes,
    parameter_count,
    split_channels,
)
from poseforge.tensor import BatchNormParams, ConvWeights, Tensor


def zero_init(node):
    """All weights zero, norms set to the exact identity transform."""
    for _, n in iter_nodes(node):
        if isinstance(n, Conv):
            cpg = n.c_in // n.groups
            bias = np.zeros(n.c_out, dtype=np.float32) if n.bias else None
            n.weights = ConvWeights(np.zeros((n.c_out, cpg, n.k, n.k), dtype=np.float32),
                                    bias, n.stride, n.padding, n.groups)
        elif isinstance(n, Norm):
            c = n.channels
            n.params = BatchNormParams(np.zeros(c, dtype=np.float32), np.ones(c, dtype=np.float32),
                                       np.ones(c, dtype=np.float32), np.zeros(c, dtype=np.float32))
        elif isinstance(n, SqueezeExcite):
            r = n.reduced
            n.w1 = np.zeros((r, n.channels), dtype=np.float32)
            n.b1 = np.zeros(r, dtype=np.float32)
            n.w2 = np.zeros((n.channels, r), dtype=np.float32)
            n.b2 = np.zeros(n.channels, dtype=np.float32)
        elif isinstance(n, MixDepthwise):
            n.weights = [ConvWeights(np.zeros((width, 1, k, k), dtype=np.float32),
                                     None, 1, k // 2, width)
                         for width, k in zip(n.split, n.kernels)]
    return node


def test_spec_validation():
    with pytest.raises(ValueError):
        BlockSpec(kind="nope")
    with pytest.raises(ValueError):
        BlockSpec(channels=0)
    with pytest.raises(ValueError):
        BlockSpec(kind="mix_d", mix_split=(100, 29))  # does not sum to channels
    assert BlockSpec().with_channels(64).channels == 64


def test_split_channels():
    assert split_channels(128, 2) == (64, 64)
    assert split_channels(7, 2) == (4, 3)   # remainder goes to the first group


def test_se_parameter_count():
    se = init_node(build_se(128, 16), np.random.default_rng(0))
    # two dense layers around an 8-wide bottleneck, plus both biases
    assert 8 * 128 + 8 + 128 * 8 + 128 == 2184
    assert parameter_count(se) == 2184


def test_se_zero_weights_halve_input():
    se = zero_init(build_se(16, 4))
    rng = np.random.default_rng(0)
    x = Tensor.from_array(rng.standard_normal((2, 16, 5, 5)))
    out = forward(se, x)
    np.testing.assert_array_equal(out.data, (x.data * 0.5))


def test_ds_unit_parameter_count():
    unit = init_node(build_ds_unit(128), np.random.default_rng(0))
    # depthwise 128*9 + bn 256 + pointwise 128*128 + bn 256
    assert 1152 + 256 + 16384 + 256 == 18048
    assert parameter_count(unit) == 18048


def test_ds_unit_identity_weights_behave_like_relu():
    c = 8
    unit = zero_init(build_ds_unit(c))
    for _, n in iter_nodes(unit):
        if isinstance(n, Conv) and n.groups == c:        # depthwise: delta kernel
            kernel = np.zeros((c, 1, 3, 3), dtype=np.float32)
            kernel[:, 0, 1, 1] = 1.0
            n.weights = ConvWeights(kernel, None, 1, 1, c)
        elif isinstance(n, Conv):                        # pointwise: identity matrix
            n.weights = ConvWeights(np.eye(c, dtype=np.float32).reshape(c, c, 1, 1))
    rng = np.random.default_rng(3)
    x = Tensor.from_array(rng.standard_normal((1, c, 6, 6)))
    out = forward(unit, x)
    # norm layers rescale by 1/sqrt(1 + eps), hence the tolerance
    np.testing.assert_allclose(out.data, np.maximum(x.data, 0.0), rtol=1e-4, atol=1e-6)


@pytest.mark.parametrize("kind", BLOCK_KINDS)
def test_zero_weight_block_is_identity(kind):
    channels = 16
    spec = BlockSpec(kind=kind, channels=channels, se_ratio=4)
    block = zero_init(build_block(spec))
    rng = np.random.default_rng(11)
    x = Tensor.from_array(rng.standard_normal((2, channels, 8, 8)))
    out = forward(block, x)
    np.testing.assert_array_equal(out.data, x.data)


@pytest.mark.parametrize("kind", BLOCK_KINDS)
@pytest.mark.parametrize("use_se,inner_skip", [(True, True), (True, False),
                                               (False, True), (False, False)])
def test_block_preserves_shape(kind, use_se, inner_skip):
    spec = BlockSpec(kind=kind, channels=32, se_ratio=4,
                     use_se=use_se, inner_skip=inner_skip)
    block = init_node(build_block(spec), np.random.default_rng(1))
    x = Tensor.from_array(np.random.default_rng(2).standard_normal((1, 32, 16, 16)))
    assert forward(block, x).shape == x.shape


def test_mix_inner_skip_adds_exactly_first_unit_output():
    channels = 32
    rng_seed = 9
    with_skip = init_node(
        build_block(BlockSpec(kind="mix_d", channels=channels, se_ratio=4, inner_skip=True)),
        np.random.default_rng(rng_seed))
    without = init_node(
        build_block(BlockSpec(kind="mix_d", channels=channels, se_ratio=4, inner_skip=False)),
        np.random.default_rng(rng_seed))
    x = Tensor.from_array(np.random.default_rng(4).standard_normal((1, channels, 8, 8)))
    body = with_skip.branches[1]
    first_unit_out = forward(body.children[0], x)
    got = forward(with_skip, x).data - forward(without, x).data
    np.testing.assert_allclose(got, first_unit_out.data, atol=1e-5)


def test_mix_split_covers_all_channels():
    spec = BlockSpec(kind="mix_d", channels=128)
    assert sum(spec.resolved_split()) == 128
    assert spec.resolved_split() == (64, 64)


@pytest.mark.parametrize("kind", BLOCK_KINDS)
def test_parameter_count_matches_cost_table(kind):
    spec = BlockSpec(kind=kind, channels=64, se_ratio=16)
    block = init_node(build_block(spec), np.random.default_rng(0))
    params, _ = layer_cost(block, (64, 16, 16))
    assert params == parameter_count(block)


def test_bottleneck_parameter_count():
    block = init_node(build_block(BlockSpec(kind="bottleneck_a", channels=128)),
                      np.random.default_rng(0))
    # 1x1 squeeze to 64, 3x3 at 64, 1x1 expand to 128, three norms
    want = (128 * 64 + 128) + (64 * 64 * 9 + 128) + (64 * 128 + 256)
    assert parameter_count(block) == want == 53760


def test_ds_block_parameter_count():
    block = init_node(build_block(BlockSpec(kind="ds_c", channels=128, se_ratio=16)),
                      np.random.default_rng(0))
    assert 2 * 18048 + 2184 == 38280
    assert parameter_count(block) == 38280
