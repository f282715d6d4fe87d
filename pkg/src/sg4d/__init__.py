"""4D scene-graph toolkit.

Entities with spatiotemporal segmentation tubes plus time-stamped relation
triplets, over RGB-D or point-cloud videos: data model, file formats,
geometry, tracking association, the R@K / mR@K triplet-recall protocol,
and a deterministic synthetic-scene generator with an analytic oracle.
"""

from .errors import Sg4dError
from .geometry import (
    CameraIntrinsics,
    FrameGeometry,
    PointCloudFrame,
    RigidTransform,
    depth_frame_to_points,
    tube_points,
    tube_trajectory,
    voxelize,
)
from .matching import FrameSegment, assign_tubes, hungarian, link_tracks
from .metrics import (
    EvaluationReport,
    RecallSlice,
    evaluate_dataset,
    mean_recall_at_k,
    recall_at_k,
)
from .model import (
    EntityNode,
    FrameInterval,
    MaskTube,
    ObjectClass,
    PointTube,
    PredicateClass,
    RelationTriplet,
    SceneGraph4D,
    Violation,
    Vocabulary,
    validate_scene_graph,
)
from .overlap import (
    RleMask,
    frame_iou,
    rle_decode,
    rle_encode,
    span_iou,
    volume_iou,
    volume_iou_counts,
)
from .relate import Rule, Rulebook, score_pairs_geometric
from .synthgen import (
    NoiseConfig,
    ObjectSpec,
    SceneRecipe,
    default_vocabulary,
    generate_scene,
    perturb_predictions,
    random_noise,
    random_recipe,
)

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "EntityNode",
    "EvaluationReport",
    "FrameGeometry",
    "FrameInterval",
    "FrameSegment",
    "MaskTube",
    "NoiseConfig",
    "ObjectClass",
    "ObjectSpec",
    "PointCloudFrame",
    "PointTube",
    "PredicateClass",
    "RecallSlice",
    "RelationTriplet",
    "RigidTransform",
    "RleMask",
    "Rule",
    "Rulebook",
    "SceneGraph4D",
    "SceneRecipe",
    "Sg4dError",
    "Violation",
    "Vocabulary",
    "assign_tubes",
    "default_vocabulary",
    "depth_frame_to_points",
    "evaluate_dataset",
    "frame_iou",
    "generate_scene",
    "hungarian",
    "link_tracks",
    "mean_recall_at_k",
    "perturb_predictions",
    "random_noise",
    "random_recipe",
    "recall_at_k",
    "rle_decode",
    "rle_encode",
    "score_pairs_geometric",
    "span_iou",
    "tube_points",
    "tube_trajectory",
    "validate_scene_graph",
    "volume_iou",
    "volume_iou_counts",
    "voxelize",
]
