"""Lift 2D annotations onto a lifted scene.

Mask instances label the points of their valid pixels; their 3D box is built
from the mask's tight bbox region.  Bbox-only instances keep their region's
valid points as the instance point set but assign no per-point labels (a
rectangle is not a segmentation).  In both cases the box is the world-axis-
aligned hull of the region's four corners lifted at the minimum and maximum
valid calibrated depth inside the region, so "height" extents are physically
meaningful in the gravity-aligned frame.

Overlapping masks: later instances (COCO order) overwrite earlier per-point
labels, but every instance keeps its full point index list.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .calibration import CalibratedDepthMap
from .camera import Extrinsics, Intrinsics, LiftedScene, transform_points, unproject_points
from .errors import ContractViolationError, MalformedRleError
from .ingest import AnnotationSet2D
from .masks import BitMask, PolygonSet, RleMask, decode_rle_mask, rasterize_polygons

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Box3D:
    """World-axis-aligned box: center and non-negative extents, in meters."""

    center: np.ndarray
    extents: np.ndarray
    instance_id: int
    category_id: int

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64).reshape(3)
        extents = np.asarray(self.extents, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(center)) or not np.all(np.isfinite(extents)):
            raise ContractViolationError("box center/extents must be finite")
        if np.any(extents < 0):
            raise ContractViolationError("box extents must be non-negative")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "extents", extents)

    @property
    def min_corner(self) -> np.ndarray:
        return self.center - self.extents / 2.0

    @property
    def max_corner(self) -> np.ndarray:
        return self.center + self.extents / 2.0

    def contains(self, points: np.ndarray, eps: float = 1e-9) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        lo = self.min_corner - eps
        hi = self.max_corner + eps
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Box3D):
            return NotImplemented
        return (
            self.instance_id == other.instance_id
            and self.category_id == other.category_id
            and bool(np.array_equal(self.center, other.center))
            and bool(np.array_equal(self.extents, other.extents))
        )

    @classmethod
    def from_points(cls, points: np.ndarray, instance_id: int, category_id: int) -> "Box3D":
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if pts.shape[0] == 0:
            raise ContractViolationError("cannot build a box from zero points")
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        return cls(
            center=(lo + hi) / 2.0,
            extents=hi - lo,
            instance_id=instance_id,
            category_id=category_id,
        )


@dataclass
class InstanceAnnotation3D:
    instance_id: int
    category_id: int
    point_indices: np.ndarray  # sorted int32 indices into the scene's point arrays
    box: Box3D | None = None

    def __eq__(self, other) -> bool:
        if not isinstance(other, InstanceAnnotation3D):
            return NotImplemented
        return (
            self.instance_id == other.instance_id
            and self.category_id == other.category_id
            and bool(np.array_equal(self.point_indices, other.point_indices))
            and self.box == other.box
        )


@dataclass
class SceneAnnotations3D:
    scene_id: str
    instances: list = field(default_factory=list)

    @property
    def rejected(self) -> bool:
        """True when no instance survived lifting (dataset drop rule)."""
        return len(self.instances) == 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, SceneAnnotations3D):
            return NotImplemented
        return self.scene_id == other.scene_id and self.instances == other.instances


def lift_segmentation(
    mask: BitMask,
    scene: LiftedScene,
    instance_id: int,
    category_id: int,
) -> np.ndarray:
    """Label the scene points whose source pixels fall inside the mask.

    Returns the (sorted) indices of exactly those points: valid pixels inside
    the mask.  Later calls overwrite per-point labels of earlier ones.

    Raises:
        ContractViolationError: mask and scene dimensions differ.
    """
    if (mask.width, mask.height) != (scene.width, scene.height):
        raise ContractViolationError(
            f"mask {mask.width}x{mask.height} does not match scene "
            f"{scene.width}x{scene.height}"
        )
    selected = mask.bits & (scene.point_index >= 0)
    indices = scene.point_index[selected]
    scene.instance_labels[indices] = instance_id
    scene.semantic_labels[indices] = category_id
    return np.sort(indices).astype(np.int32)


def region_point_indices(scene: LiftedScene, bbox: tuple) -> np.ndarray:
    """Indices of valid points whose pixel centers lie inside the bbox rect."""
    x, y, w, h = bbox
    u = scene.pixel_cols.astype(np.float64) + 0.5
    v = scene.pixel_rows.astype(np.float64) + 0.5
    inside = (u >= x) & (u <= x + w) & (v >= y) & (v <= y + h)
    return np.sort(np.flatnonzero(inside)).astype(np.int32)


def lift_bbox(
    bbox: tuple,
    calibrated: CalibratedDepthMap,
    intrinsics: Intrinsics,
    extrinsics: Extrinsics,
    instance_id: int,
    category_id: int,
) -> Box3D | None:
    """3D box from a 2D bbox via the region's depth extremes.

    The region is the set of pixels whose centers fall inside the rect.  Its
    minimum and maximum valid calibrated depths are found, the four rect
    corners are lifted at both extremes, and the box is the world-axis-
    aligned hull of those eight points.  Returns None (with a log record)
    when the region holds no valid depth.
    """
    x, y, w, h = (float(v) for v in bbox)
    hgt, wid = calibrated.height, calibrated.width
    cols = np.arange(wid, dtype=np.float64) + 0.5
    rows = np.arange(hgt, dtype=np.float64) + 0.5
    in_x = (cols >= x) & (cols <= x + w)
    in_y = (rows >= y) & (rows <= y + h)
    region = np.outer(in_y, in_x) & calibrated.mask.valid
    if not region.any():
        logger.info("bbox %s has no valid depth; no box for instance %d", bbox, instance_id)
        return None
    depths = calibrated.values[region]
    d_min = float(depths.min())
    d_max = float(depths.max())
    corners_uv = np.array(
        [[x, y], [x + w, y], [x, y + h], [x + w, y + h]], dtype=np.float64
    )
    uv = np.vstack([corners_uv, corners_uv])
    d = np.concatenate([np.full(4, d_min), np.full(4, d_max)])
    world = transform_points(unproject_points(uv, d, intrinsics), extrinsics)
    return Box3D.from_points(world, instance_id=instance_id, category_id=category_id)


def mask_tight_bbox(mask: BitMask) -> tuple | None:
    """Tight bbox of a mask with corners on the extreme pixel centers.

    Using centers (rather than pixel extents) makes the lifted box coincide
    with the extreme lifted points of the mask instead of overshooting by
    half a pixel.  Returns None for an empty mask.
    """
    rows, cols = np.nonzero(mask.bits)
    if rows.size == 0:
        return None
    x = float(cols.min()) + 0.5
    y = float(rows.min()) + 0.5
    return (x, y, float(cols.max() - cols.min()), float(rows.max() - rows.min()))


def _decode_instance_mask(segmentation, width: int, height: int) -> BitMask | None:
    if isinstance(segmentation, PolygonSet):
        return rasterize_polygons(segmentation, width, height)
    if isinstance(segmentation, RleMask):
        if (segmentation.width, segmentation.height) != (width, height):
            logger.warning(
                "RLE size %dx%d differs from image %dx%d; instance skipped",
                segmentation.width,
                segmentation.height,
                width,
                height,
            )
            return None
        try:
            return decode_rle_mask(segmentation.counts, width, height)
        except MalformedRleError as e:
            logger.warning("undecodable RLE (%s); instance skipped", e)
            return None
    return None


def build_scene_annotations(
    set2d: AnnotationSet2D,
    scene: LiftedScene,
    calibrated: CalibratedDepthMap,
    intrinsics: Intrinsics,
    extrinsics: Extrinsics,
    scene_id: str | None = None,
) -> SceneAnnotations3D:
    """Lift every 2D instance; instances losing all points are dropped.

    Mask instances: labels via lift_segmentation, box from the mask's tight
    bbox region.  Bbox-only: region points, box from the given (clamped)
    bbox.  The returned annotations report `rejected` when nothing survives.
    """
    if (set2d.width, set2d.height) != (scene.width, scene.height):
        raise ContractViolationError("annotation dimensions do not match scene")
    result = SceneAnnotations3D(scene_id=str(scene_id if scene_id is not None else set2d.image_id))
    for inst in set2d.instances:
        mask = _decode_instance_mask(inst.segmentation, set2d.width, set2d.height)
        if mask is not None:
            indices = lift_segmentation(mask, scene, inst.annotation_id, inst.category_id)
            box_rect = mask_tight_bbox(mask)
        elif inst.bbox is not None:
            indices = region_point_indices(scene, inst.bbox)
            box_rect = inst.bbox
        else:
            logger.warning("instance %d has no usable geometry; dropped", inst.annotation_id)
            continue
        if indices.size == 0:
            logger.info(
                "instance %d (category %d) has no valid points; dropped",
                inst.annotation_id,
                inst.category_id,
            )
            continue
        box = None
        if box_rect is not None:
            box = lift_bbox(
                box_rect,
                calibrated,
                intrinsics,
                extrinsics,
                instance_id=inst.annotation_id,
                category_id=inst.category_id,
            )
        result.instances.append(
            InstanceAnnotation3D(
                instance_id=inst.annotation_id,
                category_id=inst.category_id,
                point_indices=indices,
                box=box,
            )
        )
    return result
