"""Cost accounting: exact ratios, table forms, and the two independent
flop counts (runtime counter vs static walk) agreeing to the last op."""

from fractions import Fraction

import numpy as np
import pytest

from poseforge.blocks import BlockSpec, build_block
from poseforge.costs import (
    CostReport,
    collect_cost,
    format_ratio,
    layer_cost,
    network_cost,
    output_shape,
    separable_ratio,
)
from poseforge.graph import forward, init_node, parameter_count
from poseforge.network import NetworkPlan, build_hourglass_module, build_network, forward_network
from poseforge.tensor import FlopCounter, Tensor


def test_separable_ratio_exact():
    assert separable_ratio(3, 128) == Fraction(137, 1152)
    assert separable_ratio(3, 128) == Fraction(3 * 3 + 128, 3 * 3 * 128)
    assert separable_ratio(5, 64) == Fraction(25 + 64, 25 * 64)


def test_format_ratio():
    assert format_ratio(separable_ratio(3, 128)) == "137/1152 (~ 1/9)"
    assert format_ratio(Fraction(1, 4)) == "1/4 (~ 1/4)"


def test_output_shape_tracks_resamples():
    spec = BlockSpec(kind="ds_c", channels=8, se_ratio=4)
    module = build_hourglass_module(2, spec)
    assert output_shape(module, (8, 16, 16)) == (8, 16, 16)


@pytest.mark.parametrize("kind", ["bottleneck_a", "basic_b", "ds_c", "mix_d"])
def test_runtime_counter_matches_static_walk(kind):
    spec = BlockSpec(kind=kind, channels=16, se_ratio=4)
    block = init_node(build_block(spec), np.random.default_rng(0))
    x = Tensor.from_array(np.random.default_rng(1).standard_normal((1, 16, 12, 12)))
    counter = FlopCounter()
    forward(block, x, counter)
    for include in (True, False):
        params, flops = layer_cost(block, (16, 12, 12), include_elementwise=include)
        assert counter.total(include_elementwise=include) == flops
    assert parameter_count(block) == layer_cost(block, (16, 12, 12))[0]


def test_runtime_counter_matches_static_walk_whole_network():
    plan = NetworkPlan(block=BlockSpec(kind="ds_c", channels=16, se_ratio=4),
                       stages=2, input_size=64)
    net = build_network(plan, seed=0)
    counter = FlopCounter()
    forward_network(net, Tensor.zeros(1, 3, 64, 64), counter)
    for include in (True, False):
        report = network_cost(net, include_elementwise=include)
        assert counter.total(include_elementwise=include) == report.total_flops


def test_report_totals_are_row_sums():
    plan = NetworkPlan(block=BlockSpec(kind="ds_c", channels=16, se_ratio=4),
                       stages=1, input_size=64)
    report = network_cost(build_network(plan))
    assert report.total_params == sum(r.params for r in report.rows)
    assert report.total_flops == sum(r.flops for r in report.rows)


def test_csv_form():
    plan = NetworkPlan(block=BlockSpec(kind="ds_c", channels=16, se_ratio=4),
                       stages=1, input_size=64)
    report = network_cost(build_network(plan))
    lines = report.as_csv().strip().splitlines()
    assert lines[0] == "layer,params,flops"
    assert lines[-1].startswith("total,")
    name, params, flops = lines[-1].split(",")
    assert int(params) == report.total_params
    assert int(flops) == report.total_flops


def test_text_form_aggregates_by_depth():
    plan = NetworkPlan(block=BlockSpec(kind="ds_c", channels=16, se_ratio=4),
                       stages=2, input_size=64)
    report = network_cost(build_network(plan))
    text = report.as_text(depth=1)
    assert "stem" in text
    assert "stage0" in text
    assert "stage1" in text
    assert "total" in text


def test_elementwise_toggle_only_drops_elementwise():
    spec = BlockSpec(kind="ds_c", channels=16, se_ratio=4)
    block = build_block(spec)
    p_with, f_with = layer_cost(block, (16, 8, 8), include_elementwise=True)
    p_without, f_without = layer_cost(block, (16, 8, 8), include_elementwise=False)
    assert p_with == p_without           # params never depend on the toggle
    assert f_with > f_without


def test_depthwise_block_cheaper_than_standard():
    shape = (128, 16, 16)
    _, f_ds = layer_cost(build_block(BlockSpec(kind="ds_c", channels=128)), shape)
    _, f_basic = layer_cost(build_block(BlockSpec(kind="basic_b", channels=128)), shape)
    assert f_ds < f_basic / 4
