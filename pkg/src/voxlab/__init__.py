"""Semantic voxel pseudo-labels from multi-view depth and segmentation.

The package turns driving-sequence inputs (depth maps, per-pixel semantic
masks, camera and ego poses) into dense 3D semantic voxel grids with camera
visibility masks, and ships the matching evaluation metrics plus a synthetic
scene oracle for end-to-end validation.
"""

__version__ = "0.1.0"

from voxlab.scene import (  # noqa: F401
    CameraModel, ClassTable, FramePose, GridSpec, SequenceManifest,
    default_class_table, load_manifest, transform_point, validate_manifest,
    world_to_voxel,
)
from voxlab.masks import DetectionMask, SemanticMask, filter_detections, fuse_masks  # noqa: F401
from voxlab.unproject import LabeledPointCloud, split_frame, unproject_pixel  # noqa: F401
from voxlab.traversal import traverse_ray  # noqa: F401
from voxlab.filters import (  # noqa: F401
    CellStats, accumulate_static, density_filter, ray_consistency_filter,
)
from voxlab.voxelize import (  # noqa: F401
    VisibilityGrid, VoxelGrid, compose_frame_cloud, visibility_mask, voxelize,
)
from voxlab.metrics import EvalReport, grid_iou, masked_cross_entropy, ray_iou  # noqa: F401
from voxlab.pipeline import FrameLabels, PipelineConfig, run_pipeline  # noqa: F401
from voxlab.synth import ScenarioSpec, SyntheticWorld, build_world, corrupt_depth, render_views  # noqa: F401
