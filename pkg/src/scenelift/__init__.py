"""scenelift: lift single-view images into metric, gravity-aligned 3D scenes.

The library turns a 2D image plus externally predicted relative depth,
metric depth, intrinsics, and gravity into a scale-calibrated world-frame
point cloud, carries the image's 2D annotations along as per-point labels
and 3D boxes, and batch-processes whole datasets deterministically.
"""

__version__ = "0.1.0"

from .annolift import (
    Box3D,
    InstanceAnnotation3D,
    SceneAnnotations3D,
    build_scene_annotations,
    lift_bbox,
    lift_segmentation,
)
from .calibration import (
    CalibratedDepthMap,
    FilterPolicy,
    Reason,
    ScaleFactor,
    ValidityMask,
    calibrate_depth,
    compute_scale_factor,
    compute_validity_mask,
)
from .camera import (
    Extrinsics,
    Frame,
    Intrinsics,
    LiftedScene,
    PixelCoord,
    Point3,
    camera_to_world,
    intrinsics_from_prediction,
    lift_depth_map,
    project_point,
    rotation_from_gravity,
    unproject_pixel,
)
from .errors import SceneLiftError
from .ingest import (
    AnnotationSet2D,
    DepthKind,
    DepthMap,
    GravityPrediction,
    Instance2D,
    IntrinsicsPrediction,
    load_depth_raster,
    load_rgb_raster,
    parse_coco_annotations,
    write_depth_raster,
    write_rgb_raster,
)
from .masks import (
    BitMask,
    PolygonSet,
    RleMask,
    decode_rle_mask,
    encode_rle_mask,
    rasterize_polygons,
)
from .output import (
    DatasetManifest,
    SceneEntry,
    read_annotations,
    read_manifest,
    read_point_cloud,
    write_annotations,
    write_manifest,
    write_point_cloud,
)
from .pipeline import (
    PipelineConfig,
    lift_from_arrays,
    lift_scene,
    resample_to_common_grid,
    run_batch,
    sample_for_review,
    verify_outputs,
)
from .stats import (
    Histogram,
    SceneStatistics,
    category_instance_counts,
    category_point_percentages,
    collect_statistics,
    height_histogram,
    object_height,
)

__all__ = [
    "__version__",
    "AnnotationSet2D",
    "BitMask",
    "Box3D",
    "CalibratedDepthMap",
    "DatasetManifest",
    "DepthKind",
    "DepthMap",
    "Extrinsics",
    "FilterPolicy",
    "Frame",
    "GravityPrediction",
    "Histogram",
    "Instance2D",
    "InstanceAnnotation3D",
    "Intrinsics",
    "IntrinsicsPrediction",
    "LiftedScene",
    "PipelineConfig",
    "PixelCoord",
    "Point3",
    "PolygonSet",
    "Reason",
    "RleMask",
    "ScaleFactor",
    "SceneAnnotations3D",
    "SceneEntry",
    "SceneLiftError",
    "SceneStatistics",
    "ValidityMask",
    "build_scene_annotations",
    "calibrate_depth",
    "camera_to_world",
    "category_instance_counts",
    "category_point_percentages",
    "collect_statistics",
    "compute_scale_factor",
    "compute_validity_mask",
    "decode_rle_mask",
    "encode_rle_mask",
    "height_histogram",
    "intrinsics_from_prediction",
    "lift_bbox",
    "lift_depth_map",
    "lift_from_arrays",
    "lift_scene",
    "lift_segmentation",
    "load_depth_raster",
    "load_rgb_raster",
    "object_height",
    "parse_coco_annotations",
    "project_point",
    "rasterize_polygons",
    "read_annotations",
    "read_manifest",
    "read_point_cloud",
    "resample_to_common_grid",
    "rotation_from_gravity",
    "run_batch",
    "sample_for_review",
    "unproject_pixel",
    "verify_outputs",
    "write_annotations",
    "write_depth_raster",
    "write_manifest",
    "write_point_cloud",
    "write_rgb_raster",
]
