"""Synthetic ground-truth harness.

Parametric scenes (planar quads and axis-aligned boxes) are raycast in
double precision into exact depth maps, hit masks, and visible-surface
bounds.  From that ground truth the harness fabricates pipeline inputs in
the exact-recovery regime (relative depth = alpha * true depth, metric depth
= true depth, exact intrinsics and gravity) and scores a pipeline run
against the truth.  The renderer shares the lift's ray convention - one ray
per pixel through the pixel center, parametrized by camera depth - so
unprojecting the rendered depth with the planted camera reproduces the hit
points exactly.

The scene generator builds instance quads whose projected outline is an
axis-aligned pixel rectangle with at most one image axis of depth tilt.
That keeps every visible-surface extreme on a corner pixel, so the
instances' true boxes and heights are exactly recoverable and make sharp
test oracles.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annolift import Box3D, SceneAnnotations3D
from .calibration import FilterPolicy
from .camera import Extrinsics, Intrinsics, LiftedScene
from .errors import ContractViolationError
from .ingest import (
    DepthKind,
    DepthMap,
    GravityPrediction,
    IntrinsicsPrediction,
    write_camera_prediction,
    write_depth_raster,
    write_rgb_raster,
)
from .masks import BitMask, encode_rle_mask

logger = logging.getLogger(__name__)

_PALETTE = np.array(
    [
        [230, 80, 60],
        [70, 160, 230],
        [90, 200, 100],
        [240, 190, 60],
        [170, 110, 220],
        [240, 130, 190],
        [120, 220, 210],
        [250, 250, 250],
    ],
    dtype=np.uint8,
)


@dataclass(frozen=True)
class PlanarQuad:
    """Planar quadrilateral given by four world corners ordered around it."""

    corners: np.ndarray  # (4, 3)
    category_id: int
    annotated: bool = True

    def __post_init__(self):
        corners = np.asarray(self.corners, dtype=np.float64).reshape(4, 3)
        object.__setattr__(self, "corners", corners)
        n = np.cross(corners[1] - corners[0], corners[3] - corners[0])
        span = np.abs(corners - corners[0]).max()
        off_plane = abs(np.dot(corners[2] - corners[0], n))
        if off_plane > 1e-9 * max(span, 1.0) * max(np.linalg.norm(n), 1e-12):
            raise ContractViolationError("quad corners are not coplanar")


@dataclass(frozen=True)
class AxisAlignedBoxPrim:
    """Axis-aligned box in the world frame."""

    min_corner: np.ndarray
    size: np.ndarray
    category_id: int
    annotated: bool = True

    def __post_init__(self):
        object.__setattr__(
            self, "min_corner", np.asarray(self.min_corner, dtype=np.float64).reshape(3)
        )
        size = np.asarray(self.size, dtype=np.float64).reshape(3)
        if np.any(size <= 0):
            raise ContractViolationError("box size must be positive")
        object.__setattr__(self, "size", size)


@dataclass(frozen=True)
class SyntheticSceneSpec:
    width: int
    height: int
    intrinsics: Intrinsics
    extrinsics: Extrinsics
    primitives: tuple
    alpha: float = 1.0
    metric_noise_sigma: float = 0.0

    def __post_init__(self):
        if not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise ContractViolationError("alpha must be finite and positive")
        if not self.primitives:
            raise ContractViolationError("scene spec has no primitives")


@dataclass
class GroundTruthInstance:
    instance_id: int
    category_id: int
    mask: BitMask
    box: Box3D
    height: float


@dataclass
class GroundTruth:
    spec: SyntheticSceneSpec
    depth: DepthMap  # true metric depth, NaN where no primitive is hit
    hit_index: np.ndarray  # (h, w) int32 primitive index, -1 = miss
    points: np.ndarray  # (h, w, 3) world hit points, NaN at misses
    instances: list = field(default_factory=list)  # GroundTruthInstance, annotated prims

    @property
    def valid(self) -> np.ndarray:
        return self.hit_index >= 0


def _ray_directions(spec: SyntheticSceneSpec) -> np.ndarray:
    """(h, w, 3) world-frame ray directions with unit camera-z component,
    so the ray parameter is camera depth."""
    K = spec.intrinsics
    u = np.arange(spec.width, dtype=np.float64) + 0.5
    v = np.arange(spec.height, dtype=np.float64) + 0.5
    ru = (u - K.cx) / K.fx
    rv = (v - K.cy) / K.fy
    grid_u, grid_v = np.meshgrid(ru, rv)
    cam = np.stack([grid_u, grid_v, np.ones_like(grid_u)], axis=-1)
    return cam @ spec.extrinsics.rotation.T


def _in_triangle(pts: np.ndarray, a, b, c, unit_normal) -> np.ndarray:
    """Half-plane test with unit-normalized edges, so each sign value is the
    in-plane distance (meters) to that edge line.  The 1e-9 m slack keeps
    points that land exactly on a triangulation diagonal inside; anything
    genuinely outside a generated quad is at least a fraction of a pixel
    (millimeters) away."""
    inside = None
    for p0, p1 in ((a, b), (b, c), (c, a)):
        edge = p1 - p0
        edge = edge / np.linalg.norm(edge)
        dist = np.cross(edge, pts - p0) @ unit_normal
        ok = dist >= -1e-9
        inside = ok if inside is None else inside & ok
    return inside


def _intersect_quad(quad: PlanarQuad, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    c = quad.corners
    normal = np.cross(c[1] - c[0], c[3] - c[0])
    denom = dirs @ normal
    numer = float(np.dot(c[0] - origin, normal))
    with np.errstate(divide="ignore", invalid="ignore"):
        d = numer / denom
    pts = origin + d[..., None] * dirs
    unit_normal = normal / np.linalg.norm(normal)
    inside = _in_triangle(pts, c[0], c[1], c[2], unit_normal) | _in_triangle(
        pts, c[0], c[2], c[3], unit_normal
    )
    with np.errstate(invalid="ignore"):
        ok = inside & np.isfinite(d) & (d > 0)
    return np.where(ok, d, np.nan)


def _intersect_box(box: AxisAlignedBoxPrim, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    lo = box.min_corner
    hi = box.min_corner + box.size
    safe = np.where(np.abs(dirs) < 1e-300, 1e-300, dirs)
    t_lo = (lo - origin) / safe
    t_hi = (hi - origin) / safe
    t_near = np.minimum(t_lo, t_hi).max(axis=-1)
    t_far = np.maximum(t_lo, t_hi).min(axis=-1)
    hit = (t_near <= t_far) & (t_far > 0)
    d = np.where(t_near > 0, t_near, t_far)
    return np.where(hit, d, np.nan)


def render_ground_truth(spec: SyntheticSceneSpec) -> GroundTruth:
    """Raycast the scene: nearest positive hit per pixel, double precision.

    Raises:
        ContractViolationError: no primitive is visible at all.
    """
    origin = spec.extrinsics.translation
    dirs = _ray_directions(spec)
    depth_layers = np.full((len(spec.primitives), spec.height, spec.width), np.nan)
    for i, prim in enumerate(spec.primitives):
        if isinstance(prim, PlanarQuad):
            depth_layers[i] = _intersect_quad(prim, origin, dirs)
        elif isinstance(prim, AxisAlignedBoxPrim):
            depth_layers[i] = _intersect_box(prim, origin, dirs)
        else:
            raise ContractViolationError(f"unknown primitive type {type(prim)!r}")

    all_nan = np.all(np.isnan(depth_layers), axis=0)
    if all_nan.all():
        raise ContractViolationError("nothing visible: every ray misses every primitive")
    filled = np.where(np.isnan(depth_layers), np.inf, depth_layers)
    hit_index = np.where(all_nan, -1, filled.argmin(axis=0)).astype(np.int32)
    depth_values = np.where(all_nan, np.nan, filled.min(axis=0))
    points = origin + depth_values[..., None] * dirs

    gt = GroundTruth(
        spec=spec,
        depth=DepthMap(
            width=spec.width, height=spec.height, values=depth_values, kind=DepthKind.METRIC
        ),
        hit_index=hit_index,
        points=points,
    )
    for i, prim in enumerate(spec.primitives):
        if not prim.annotated:
            continue
        mask_bits = hit_index == i
        if not mask_bits.any():
            logger.info("annotated primitive %d is fully occluded or off-screen", i)
            continue
        vis = points[mask_bits]
        instance_id = i + 1
        gt.instances.append(
            GroundTruthInstance(
                instance_id=instance_id,
                category_id=prim.category_id,
                mask=BitMask(width=spec.width, height=spec.height, bits=mask_bits),
                box=Box3D.from_points(vis, instance_id=instance_id, category_id=prim.category_id),
                height=float(vis[:, 2].max() - vis[:, 2].min()),
            )
        )
    return gt


@dataclass
class SceneInputBundle:
    """Everything the pipeline ingests for one scene, in memory."""

    scene_id: str
    image_id: int
    d_r: DepthMap
    d_m: DepthMap
    rgb: np.ndarray
    intrinsics_pred: IntrinsicsPrediction
    gravity: GravityPrediction
    coco_image: dict
    coco_annotations: list


def make_pipeline_inputs(
    gt: GroundTruth,
    alpha: float | None = None,
    scene_id: str = "scene_0000",
    image_id: int = 0,
    rng: np.random.Generator | None = None,
) -> SceneInputBundle:
    """Fabricate pipeline inputs from ground truth.

    Relative depth is alpha * true depth, metric depth is the true depth
    (plus the scene spec's noise, if configured), the camera prediction carries the
    planted intrinsics and the camera-frame up vector, and instances are
    emitted as COCO annotations (RLE for even instances, polygon for odd
    ones; both describe the same pixel set for the generator's rectangular
    masks).
    """
    spec = gt.spec
    if alpha is None:
        alpha = spec.alpha
    if not (alpha > 0 and np.isfinite(alpha)):
        raise ContractViolationError("alpha must be finite and positive")

    d_r = DepthMap(
        width=spec.width,
        height=spec.height,
        values=alpha * gt.depth.values,
        kind=DepthKind.RELATIVE,
    )
    metric_values = gt.depth.values
    if spec.metric_noise_sigma > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        noise = rng.normal(0.0, spec.metric_noise_sigma, size=metric_values.shape)
        metric_values = np.clip(metric_values + noise, 1e-6, None)
        metric_values = np.where(np.isfinite(gt.depth.values), metric_values, np.nan)
    d_m = DepthMap(
        width=spec.width, height=spec.height, values=metric_values.copy(), kind=DepthKind.METRIC
    )

    rgb = np.zeros((spec.height, spec.width, 3), dtype=np.uint8)
    hit = gt.hit_index >= 0
    rgb[hit] = _PALETTE[gt.hit_index[hit] % len(_PALETTE)]

    K = spec.intrinsics
    intr = IntrinsicsPrediction(
        focal_x=K.fx,
        focal_y=K.fy,
        principal_x=K.cx,
        principal_y=K.cy,
        width=spec.width,
        height=spec.height,
    )
    up_cam = spec.extrinsics.rotation.T @ np.array([0.0, 0.0, 1.0])
    up_cam = up_cam / np.linalg.norm(up_cam)
    forward_world = spec.extrinsics.rotation @ np.array([0.0, 0.0, 1.0])
    latitude = float(np.arcsin(np.clip(forward_world[2], -1.0, 1.0)))
    gravity = GravityPrediction(up=up_cam, latitude=latitude)

    coco_image = {
        "id": image_id,
        "width": spec.width,
        "height": spec.height,
        "file_name": f"{scene_id}.rgb",
    }
    annotations = []
    for k, inst in enumerate(gt.instances):
        rows, cols = np.nonzero(inst.mask.bits)
        bbox = [
            float(cols.min()),
            float(rows.min()),
            float(cols.max() - cols.min() + 1),
            float(rows.max() - rows.min() + 1),
        ]
        if k % 2 == 0:
            segmentation = {
                "counts": encode_rle_mask(inst.mask),
                "size": [spec.height, spec.width],
            }
        else:
            x0, y0 = bbox[0], bbox[1]
            x1, y1 = x0 + bbox[2], y0 + bbox[3]
            segmentation = [[x0, y0, x1, y0, x1, y1, x0, y1]]
        annotations.append(
            {
                "id": inst.instance_id,
                "image_id": image_id,
                "category_id": inst.category_id,
                "segmentation": segmentation,
                "bbox": bbox,
                "iscrowd": 0,
                "area": inst.mask.area,
            }
        )
    return SceneInputBundle(
        scene_id=scene_id,
        image_id=image_id,
        d_r=d_r,
        d_m=d_m,
        rgb=rgb,
        intrinsics_pred=intr,
        gravity=gravity,
        coco_image=coco_image,
        coco_annotations=annotations,
    )


def coco_document(bundles) -> dict:
    """Merge per-scene COCO fragments into one instances document."""
    images = []
    annotations = []
    categories = set()
    for b in bundles:
        images.append(b.coco_image)
        annotations.extend(b.coco_annotations)
        categories.update(a["category_id"] for a in b.coco_annotations)
    return {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": c, "name": f"category_{c}"} for c in sorted(categories)],
    }


def planted_rotation(up_cam: np.ndarray) -> Extrinsics:
    """Rotation following the documented convention, written out independently
    of the camera module: rows are (b x u, b, u) with b the unit horizontal
    part of the camera forward axis."""
    u = np.asarray(up_cam, dtype=np.float64)
    u = u / np.linalg.norm(u)
    forward = np.array([0.0, 0.0, 1.0])
    horiz = forward - (forward @ u) * u
    norm = np.linalg.norm(horiz)
    if norm < 1e-6:
        raise ContractViolationError("planted up vector may not be parallel to forward")
    b = horiz / norm
    rows = np.stack([np.cross(b, u), b, u])
    return Extrinsics(rotation=rows, translation=np.zeros(3))


def _quad_from_pixel_rect(
    intrinsics: Intrinsics,
    extrinsics: Extrinsics,
    u0: float,
    v0: float,
    u1: float,
    v1: float,
    depth_near: float,
    depth_far: float,
    tilt_axis: str,
    category_id: int,
    annotated: bool = True,
) -> PlanarQuad:
    """Planar quad whose projection is exactly the pixel rect [u0,u1]x[v0,v1].

    Depth varies from depth_near to depth_far along the tilt axis only, which
    keeps the four corners coplanar (a trapezoid in 3D).
    """
    corners_uv = np.array([[u0, v0], [u1, v0], [u1, v1], [u0, v1]], dtype=np.float64)
    if tilt_axis == "v":
        depths = np.array([depth_near, depth_near, depth_far, depth_far])
    elif tilt_axis == "u":
        depths = np.array([depth_near, depth_far, depth_far, depth_near])
    else:
        raise ValueError("tilt_axis must be 'u' or 'v'")
    ru = (corners_uv[:, 0] - intrinsics.cx) / intrinsics.fx
    rv = (corners_uv[:, 1] - intrinsics.cy) / intrinsics.fy
    cam = np.column_stack([ru, rv, np.ones(4)]) * depths[:, None]
    world = cam @ extrinsics.rotation.T + extrinsics.translation
    return PlanarQuad(corners=world, category_id=category_id, annotated=annotated)


def random_scene_spec(
    rng: np.random.Generator,
    width: int = 64,
    height: int = 64,
    n_instances: int | None = None,
    upright: bool = False,
    fronto_parallel: bool = False,
    height_range: tuple[float, float] | None = None,
    alpha: float | None = None,
) -> SyntheticSceneSpec:
    """Random backdrop-plus-instances scene in front of a random camera.

    With ``upright=True, fronto_parallel=True, height_range=(lo, hi)`` the
    instances become fronto-parallel rectangles whose visible vertical
    extents land inside the requested range - the regime used for the
    height-recovery checks.
    """
    fx = fy = float(rng.uniform(0.9, 1.4) * width)
    cx = width / 2.0 + float(rng.uniform(-1.5, 1.5))
    cy = height / 2.0 + float(rng.uniform(-1.5, 1.5))
    intrinsics = Intrinsics(fx=fx, fy=fy, cx=cx, cy=cy)

    if upright:
        up_cam = np.array([0.0, -1.0, 0.0])
    else:
        while True:
            up_cam = rng.normal(size=3)
            norm = np.linalg.norm(up_cam)
            if norm < 1e-6:
                continue
            up_cam = up_cam / norm
            if abs(up_cam[2]) <= 0.95:
                break
    extrinsics = planted_rotation(up_cam)

    backdrop_depth = float(rng.uniform(9.0, 14.0))
    primitives: list = [
        _quad_from_pixel_rect(
            intrinsics,
            extrinsics,
            1.0,
            1.0,
            width - 1.0,
            height - 1.0,
            backdrop_depth,
            backdrop_depth * float(rng.uniform(1.0, 1.15)),
            "v",
            category_id=0,
            annotated=False,
        )
    ]

    if n_instances is None:
        n_instances = int(rng.integers(1, 4))
    categories = rng.integers(1, 6, size=n_instances)
    slot_edges = np.linspace(2, width - 2, n_instances + 1)
    placed = 0
    for i in range(n_instances):
        lo = int(np.ceil(slot_edges[i])) + 1
        hi = int(np.floor(slot_edges[i + 1])) - 1
        if hi - lo < 6:
            # image too narrow for this many side-by-side instances
            continue
        c0 = int(rng.integers(lo, hi - 5))
        c1 = int(rng.integers(c0 + 4, hi))
        if height_range is not None:
            target = float(rng.uniform(height_range[0] + 0.01, height_range[1] - 0.01))
            m = int(np.clip(round(target * fy / 3.5), 12, height - 16))
            depth_near = target * fy / m
            r0 = int(rng.integers(2, height - m - 3))
            r1 = r0 + m
            depth_far = depth_near
            tilt = "v"
        else:
            r0 = int(rng.integers(2, height // 2))
            r1 = int(rng.integers(r0 + 4, height - 2))
            depth_near = float(rng.uniform(2.0, 5.0))
            if fronto_parallel:
                depth_far = depth_near
            else:
                depth_far = depth_near * float(rng.uniform(1.05, 1.3))
            tilt = "u" if rng.uniform() < 0.5 else "v"
        primitives.append(
            _quad_from_pixel_rect(
                intrinsics,
                extrinsics,
                float(c0),
                float(r0),
                float(c1 + 1),
                float(r1 + 1),
                depth_near,
                depth_far,
                tilt,
                category_id=int(categories[i]),
            )
        )
        placed += 1

    if placed == 0:
        # guarantee at least one annotated instance: center half of the image
        primitives.append(
            _quad_from_pixel_rect(
                intrinsics,
                extrinsics,
                float(width // 4),
                float(height // 4),
                float(3 * width // 4),
                float(3 * height // 4),
                3.0,
                3.0,
                "v",
                category_id=1,
            )
        )

    if alpha is None:
        alpha = float(10.0 ** rng.uniform(-2.0, 2.0))
    return SyntheticSceneSpec(
        width=width,
        height=height,
        intrinsics=intrinsics,
        extrinsics=extrinsics,
        primitives=tuple(primitives),
        alpha=alpha,
    )


@dataclass
class InstanceScore:
    instance_id: int
    label_iou: float
    box_iou: float | None
    height_error: float


@dataclass
class SceneScore:
    scene_id: str
    cloud_rmse: float
    matched_points: int
    instances: list = field(default_factory=list)
    unmatched_gt_instances: list = field(default_factory=list)
    unmatched_run_instances: list = field(default_factory=list)

    @property
    def min_label_iou(self) -> float:
        return min((i.label_iou for i in self.instances), default=float("nan"))

    @property
    def min_box_iou(self) -> float:
        vals = [i.box_iou for i in self.instances if i.box_iou is not None]
        return min(vals, default=float("nan"))

    @property
    def max_height_error(self) -> float:
        return max((i.height_error for i in self.instances), default=float("nan"))


def box_iou_3d(a: Box3D, b: Box3D) -> float:
    """Axis-aligned 3D IoU by interval intersection.

    Flat boxes (zero volume, e.g. a fronto-parallel surface seen by an
    axis-aligned camera) defeat the volume ratio, so when the union has no
    volume the boxes score 1.0 iff their corners agree within 1e-9, else 0.
    """
    lo = np.maximum(a.min_corner, b.min_corner)
    hi = np.minimum(a.max_corner, b.max_corner)
    inter = float(np.prod(np.clip(hi - lo, 0.0, None)))
    vol_a = float(np.prod(a.extents))
    vol_b = float(np.prod(b.extents))
    union = vol_a + vol_b - inter
    if union <= 0.0:
        same = np.allclose(
            a.min_corner, b.min_corner, rtol=1e-9, atol=1e-12
        ) and np.allclose(a.max_corner, b.max_corner, rtol=1e-9, atol=1e-12)
        return 1.0 if same else 0.0
    return inter / union


def _pixel_set(rows: np.ndarray, cols: np.ndarray, width: int) -> np.ndarray:
    return rows.astype(np.int64) * width + cols.astype(np.int64)


def score_scene(
    scene: LiftedScene,
    annotations: SceneAnnotations3D,
    gt: GroundTruth,
) -> SceneScore:
    """Score one lifted scene against ground truth.

    RMSE runs over pixel-matched points (pixels valid in both the run and
    the truth).  Label IoU compares, per instance id, the run's labeled
    pixel set against the truth's hit mask.  Height error compares z extents.
    """
    from .stats import object_height

    gt_valid = gt.valid
    run_rows = scene.pixel_rows
    run_cols = scene.pixel_cols
    matched = gt_valid[run_rows, run_cols]
    n_matched = int(np.count_nonzero(matched))
    if n_matched:
        diff = scene.points[matched] - gt.points[run_rows[matched], run_cols[matched]]
        rmse = float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))
    else:
        rmse = float("nan")

    score = SceneScore(scene_id=annotations.scene_id, cloud_rmse=rmse, matched_points=n_matched)
    gt_by_id = {inst.instance_id: inst for inst in gt.instances}
    run_ids = set()
    for inst in annotations.instances:
        run_ids.add(inst.instance_id)
        gt_inst = gt_by_id.get(inst.instance_id)
        if gt_inst is None:
            score.unmatched_run_instances.append(inst.instance_id)
            continue
        idx = inst.point_indices
        run_pixels = _pixel_set(run_rows[idx], run_cols[idx], scene.width)
        gt_rows, gt_cols = np.nonzero(gt_inst.mask.bits)
        gt_pixels = _pixel_set(gt_rows, gt_cols, scene.width)
        inter = np.intersect1d(run_pixels, gt_pixels, assume_unique=True).size
        union = np.union1d(run_pixels, gt_pixels).size
        label_iou = inter / union if union else 0.0
        box_iou = box_iou_3d(inst.box, gt_inst.box) if inst.box is not None else None
        height_err = abs(object_height(scene.points[idx]) - gt_inst.height)
        score.instances.append(
            InstanceScore(
                instance_id=inst.instance_id,
                label_iou=label_iou,
                box_iou=box_iou,
                height_error=height_err,
            )
        )
    score.unmatched_gt_instances = sorted(set(gt_by_id) - run_ids)
    return score


def score_run(results, truths) -> dict:
    """Score a whole run: results are (scene, annotations) pairs keyed like
    ``truths`` (a mapping scene_id -> GroundTruth).  Unmatched scenes are
    reported in the output, never fatal."""
    scores = []
    unmatched_scenes = []
    for scene, annotations in results:
        gt = truths.get(annotations.scene_id)
        if gt is None:
            unmatched_scenes.append(annotations.scene_id)
            continue
        scores.append(score_scene(scene, annotations, gt))
    report = aggregate_scores(scores)
    report["unmatched_scenes"] = sorted(unmatched_scenes)
    report["per_scene"] = {
        s.scene_id: {
            "cloud_rmse": s.cloud_rmse,
            "min_label_iou": s.min_label_iou,
            "min_box_iou": s.min_box_iou,
            "max_height_error": s.max_height_error,
        }
        for s in scores
    }
    return report


def aggregate_scores(scores) -> dict:
    scores = list(scores)
    report = {
        "scenes": len(scores),
        "max_cloud_rmse": max((s.cloud_rmse for s in scores), default=float("nan")),
        "min_label_iou": min(
            (s.min_label_iou for s in scores if s.instances), default=float("nan")
        ),
        "min_box_iou": min(
            (s.min_box_iou for s in scores if s.instances), default=float("nan")
        ),
        "max_height_error": max(
            (s.max_height_error for s in scores if s.instances), default=float("nan")
        ),
        "unmatched": sorted(
            {
                (s.scene_id, i)
                for s in scores
                for i in (*s.unmatched_gt_instances, *s.unmatched_run_instances)
            }
        ),
    }
    return report


ORACLE_POLICY = FilterPolicy(
    edge_margin_px=0, outlier_k=3.0, outlier_enabled=False, min_valid_points=16
)


def write_fixture_scene(root: Path, bundle: SceneInputBundle, gt: GroundTruth) -> None:
    """Write one scene's input files plus its ground truth for later scoring."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "depth_relative").mkdir(exist_ok=True)
    (root / "depth_metric").mkdir(exist_ok=True)
    (root / "cameras").mkdir(exist_ok=True)
    (root / "ground_truth").mkdir(exist_ok=True)

    (root / "images" / f"{bundle.scene_id}.rgb").write_bytes(write_rgb_raster(bundle.rgb))
    (root / "depth_relative" / f"{bundle.scene_id}.dpt").write_bytes(
        write_depth_raster(bundle.d_r, dtype="f64")
    )
    (root / "depth_metric" / f"{bundle.scene_id}.dpt").write_bytes(
        write_depth_raster(bundle.d_m, dtype="f64")
    )
    up = bundle.gravity.up
    write_camera_prediction(
        root / "cameras" / f"{bundle.scene_id}.json",
        bundle.intrinsics_pred,
        up=up,
        latitude=bundle.gravity.latitude,
    )
    np.savez_compressed(
        root / "ground_truth" / f"{bundle.scene_id}.npz",
        depth=gt.depth.values,
        hit_index=gt.hit_index,
        points=gt.points,
    )
    gt_doc = {
        "scene_id": bundle.scene_id,
        "alpha": gt.spec.alpha,
        "instances": [
            {
                "instance_id": inst.instance_id,
                "category_id": inst.category_id,
                "height": inst.height,
                "box_min": [float(v) for v in inst.box.min_corner],
                "box_max": [float(v) for v in inst.box.max_corner],
            }
            for inst in gt.instances
        ],
    }
    (root / "ground_truth" / f"{bundle.scene_id}.json").write_text(
        json.dumps(gt_doc, sort_keys=True, indent=1), "utf-8"
    )


def generate_fixture_set(
    root: Path,
    n_scenes: int,
    seed: int = 0,
    width: int = 64,
    height: int = 64,
    upright: bool = False,
    fronto_parallel: bool = False,
    height_range: tuple[float, float] | None = None,
    include_broken: bool = False,
) -> list[str]:
    """Emit a fixture directory consumable by the batch pipeline.

    With ``include_broken`` the last three scenes are sabotaged to exercise
    rejection paths: one with no annotated instances, one with an all-NaN
    relative depth map, one with its metric depth file removed.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    bundles = []
    scene_ids = []
    for i in range(n_scenes):
        scene_rng = np.random.default_rng(seed * 100003 + i)
        spec = random_scene_spec(
            scene_rng,
            width=width,
            height=height,
            upright=upright,
            fronto_parallel=fronto_parallel,
            height_range=height_range,
        )
        scene_id = f"scene_{i:04d}"
        if include_broken and i == n_scenes - 3:
            # keep only the unannotated backdrop: no valid objects
            spec = SyntheticSceneSpec(
                width=spec.width,
                height=spec.height,
                intrinsics=spec.intrinsics,
                extrinsics=spec.extrinsics,
                primitives=spec.primitives[:1],
                alpha=spec.alpha,
            )
        gt = render_ground_truth(spec)
        bundle = make_pipeline_inputs(gt, scene_id=scene_id, image_id=i, rng=rng)
        if include_broken and i == n_scenes - 2:
            bundle.d_r = DepthMap(
                width=spec.width,
                height=spec.height,
                values=np.full((spec.height, spec.width), np.nan),
                kind=DepthKind.RELATIVE,
            )
        write_fixture_scene(root, bundle, gt)
        if include_broken and i == n_scenes - 1:
            (root / "depth_metric" / f"{scene_id}.dpt").unlink()
        bundles.append(bundle)
        scene_ids.append(scene_id)

    (root / "annotations.json").write_text(
        json.dumps(coco_document(bundles), sort_keys=True), "utf-8"
    )
    config = {
        "images": "images",
        "depth_relative": "depth_relative",
        "depth_metric": "depth_metric",
        "cameras": "cameras",
        "annotations": "annotations.json",
        "output": "run",
        "filter": {
            "edge_margin_px": ORACLE_POLICY.edge_margin_px,
            "outlier_k": ORACLE_POLICY.outlier_k,
            "outlier_enabled": ORACLE_POLICY.outlier_enabled,
            "min_valid_points": ORACLE_POLICY.min_valid_points,
        },
        "resample": "nearest",
        "workers": 1,
        "review": {"n": 4, "seed": 0},
    }
    (root / "config.json").write_text(json.dumps(config, sort_keys=True, indent=1), "utf-8")
    return scene_ids
