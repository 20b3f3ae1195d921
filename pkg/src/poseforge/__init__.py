"""Multi-person pose estimation toolkit: separable-convolution hourglass
networks with exact cost accounting, plus a centroid-guided encode/decode
pipeline for joint grouping and its evaluation metrics."""

from .blocks import BLOCK_KINDS, BlockSpec, build_block
from .codec import (
    CENTROID,
    JOINT_NAMES,
    NUM_JOINTS,
    CodecConfig,
    GroundTruthMaps,
    ImageAnnotation,
    PersonAnnotation,
    PoseTree,
    compute_centroid,
    encode_annotation,
    flat_tree,
    hierarchical_tree,
    make_tree,
    mse_loss,
    render_heatmaps,
    render_offsets,
    smooth_l1_loss,
)
from .costs import CostReport, collect_cost, format_ratio, layer_cost, network_cost, separable_ratio
from .decoder import Candidate, DecodeConfig, PersonInstance, decode_poses, extract_peaks, predict_parent
from .dshg import read_dshg, write_dshg
from .formats import (
    annotations_to_doc,
    doc_to_annotations,
    doc_to_pose_lists,
    dump_json,
    load_json,
    poses_to_doc,
    validate_annotations,
    validate_poses,
)
from .graph import forward
from .metrics import MetricReport, evaluate, head_size, match_persons, score_pair, torso_size
from .network import (
    ARCHS,
    OUTPUT_STRIDE,
    Network,
    NetworkPlan,
    build_hourglass_module,
    build_network,
    forward_network,
    load_weights,
    network_parameter_count,
    plan_for_arch,
    save_weights,
)
from .selftest import run_selftest
from .synth import CANONICAL_SKELETON, SceneConfig, generate_scene, perturb_maps, skeleton_instance
from .tensor import BatchNormParams, ConvWeights, FlopCounter, ShapeError, Tensor, conv2d

__version__ = "0.1.0"

__all__ = [
    "ARCHS",
    "BLOCK_KINDS",
    "BatchNormParams",
    "BlockSpec",
    "CANONICAL_SKELETON",
    "CENTROID",
    "Candidate",
    "CodecConfig",
    "ConvWeights",
    "CostReport",
    "DecodeConfig",
    "FlopCounter",
    "GroundTruthMaps",
    "ImageAnnotation",
    "JOINT_NAMES",
    "MetricReport",
    "NUM_JOINTS",
    "Network",
    "NetworkPlan",
    "OUTPUT_STRIDE",
    "PersonAnnotation",
    "PersonInstance",
    "PoseTree",
    "SceneConfig",
    "ShapeError",
    "Tensor",
    "annotations_to_doc",
    "build_block",
    "build_hourglass_module",
    "build_network",
    "collect_cost",
    "compute_centroid",
    "conv2d",
    "decode_poses",
    "doc_to_annotations",
    "doc_to_pose_lists",
    "dump_json",
    "encode_annotation",
    "evaluate",
    "extract_peaks",
    "flat_tree",
    "format_ratio",
    "forward",
    "forward_network",
    "generate_scene",
    "head_size",
    "hierarchical_tree",
    "layer_cost",
    "load_json",
    "load_weights",
    "make_tree",
    "match_persons",
    "mse_loss",
    "network_cost",
    "network_parameter_count",
    "perturb_maps",
    "plan_for_arch",
    "poses_to_doc",
    "predict_parent",
    "read_dshg",
    "render_heatmaps",
    "render_offsets",
    "run_selftest",
    "save_weights",
    "score_pair",
    "separable_ratio",
    "skeleton_instance",
    "smooth_l1_loss",
    "torso_size",
    "validate_annotations",
    "validate_poses",
    "write_dshg",
]
