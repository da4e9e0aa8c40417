"""Compressed two-scale object detector toolkit.

Pure-numpy inference engine for a shuffle-backbone detector with a
simplified two-level path-aggregation neck, plus the cost analyzer,
weight container, KITTI tooling and evaluation code around it.
"""

from .analyzer import CostReport, analyze
from .builders import (
    VARIANTS,
    build_csp_dense_block,
    build_shuffle_unit,
    build_yofflenet,
)
from .detect import (
    AnchorSet,
    Detection,
    decode,
    giou,
    giou_loss_and_grad,
    iou,
    nms,
)
from .evaluation import (
    DetBox,
    EvalReport,
    average_precision,
    evaluate,
    match_detections,
    mean_ap,
)
from .executor import BoundModel, bind, execute
from .graph import Graph, GraphError, LayerSpec, infer_shapes, to_text
from .kitti import (
    DatasetSplit,
    GroundTruthBox,
    KittiFormatError,
    anchor_kmeans,
    kmeans_anchors,
    letterbox_image,
    parse_kitti_label,
    split_dataset,
)
from .tensor_ops import (
    ConvParams,
    Tensor,
    channel_shuffle,
    channel_split,
    concat_channels,
    conv2d,
    depthwise_conv2d,
    maxpool2d,
    upsample_nearest2x,
)
from .weights import WeightFileError, WeightStore, init_random, load, save

__version__ = "0.1.0"

__all__ = [
    "AnchorSet",
    "BoundModel",
    "ConvParams",
    "CostReport",
    "DatasetSplit",
    "DetBox",
    "Detection",
    "EvalReport",
    "Graph",
    "GraphError",
    "GroundTruthBox",
    "KittiFormatError",
    "LayerSpec",
    "Tensor",
    "VARIANTS",
    "WeightFileError",
    "WeightStore",
    "analyze",
    "anchor_kmeans",
    "average_precision",
    "bind",
    "build_csp_dense_block",
    "build_shuffle_unit",
    "build_yofflenet",
    "channel_shuffle",
    "channel_split",
    "concat_channels",
    "conv2d",
    "decode",
    "depthwise_conv2d",
    "evaluate",
    "execute",
    "giou",
    "giou_loss_and_grad",
    "infer_shapes",
    "init_random",
    "iou",
    "kmeans_anchors",
    "letterbox_image",
    "load",
    "match_detections",
    "maxpool2d",
    "mean_ap",
    "nms",
    "parse_kitti_label",
    "save",
    "split_dataset",
    "to_text",
    "upsample_nearest2x",
    "__version__",
]
