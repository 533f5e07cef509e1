"""Camera models, gravity-aligned extrinsics, and depth-map lifting.

COORDINATE CONVENTIONS
======================
Camera frame (right-handed, standard pinhole):
    x right, y down, z forward along the optical axis.
    An upright photo therefore has its up direction at roughly (0, -1, 0).

World frame (right-handed, z up):
    The rotation returned by :func:`rotation_from_gravity` maps the
    aggregated camera-frame up vector to (0, 0, 1).  Gravity fixes only two
    rotational degrees of freedom; yaw is pinned by mapping the camera
    forward axis (+z_cam), with its up-component removed, onto world +y.
    The translation is zero for every scene: a single image defines no
    global position, so the world origin is the camera center.

Pixel coordinates are (u, v) = (column, row), subpixel reals allowed.  When
a whole depth map is lifted, each pixel is sampled at its center,
(col + 0.5, row + 0.5), matching the rasterization convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .calibration import CalibratedDepthMap
from .errors import (
    ContractViolationError,
    DegenerateGravityError,
    GravityUnavailableError,
)
from .ingest import GravityPrediction, IntrinsicsPrediction

_CAMERA_FORWARD = np.array([0.0, 0.0, 1.0])
_CAMERA_IMAGE_UP = np.array([0.0, -1.0, 0.0])
_PARALLEL_TOL = 1e-6


class Frame(Enum):
    CAMERA = "camera"
    WORLD = "world"


@dataclass(frozen=True)
class PixelCoord:
    u: float
    v: float


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float
    frame: Frame

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


@dataclass(frozen=True)
class Intrinsics:
    """Upper-triangular pinhole matrix with zero skew."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ContractViolationError("focal lengths must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def inverse(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True)
class Extrinsics:
    """Rigid camera-to-world transform: p_world = R @ p_cam + t."""

    rotation: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise ContractViolationError("rotation must be 3x3")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9:
            raise ContractViolationError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ContractViolationError("rotation determinant is not +1 within 1e-9")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)


def intrinsics_from_prediction(pred: IntrinsicsPrediction) -> Intrinsics:
    return Intrinsics(fx=pred.focal_x, fy=pred.focal_y, cx=pred.principal_x, cy=pred.principal_y)


def aggregate_up_vector(
    gravity: GravityPrediction, principal: tuple[float, float] | None = None
) -> np.ndarray:
    """Reduce a gravity prediction to a single unit up vector (camera frame).

    A single supplied vector is used as-is.  For a per-pixel field, the
    sample nearest the principal point is used when one is given (the least
    distorted sample); otherwise all finite field vectors are averaged and
    renormalized.

    Raises:
        GravityUnavailableError: no finite up vector exists.
    """
    if gravity.up is not None:
        u = np.asarray(gravity.up, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(u)):
            raise GravityUnavailableError("aggregate up vector is not finite")
        return u / np.linalg.norm(u)

    assert gravity.up_field is not None
    grid = np.asarray(gravity.up_field, dtype=np.float64)
    h, w = grid.shape[0], grid.shape[1]
    finite = np.all(np.isfinite(grid), axis=2)
    if not finite.any():
        raise GravityUnavailableError("all per-pixel up vectors are invalid")
    if principal is not None:
        col = int(np.clip(round(principal[0] - 0.5), 0, w - 1))
        row = int(np.clip(round(principal[1] - 0.5), 0, h - 1))
        if finite[row, col]:
            u = grid[row, col]
            return u / np.linalg.norm(u)
    mean = grid[finite].mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < _PARALLEL_TOL:
        raise GravityUnavailableError("up field averages to the zero vector")
    return mean / norm


def _rotation_rows_from_up(up: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Rows (a, b, c) such that R maps `up` to +z and `reference` into the
    +y half of the y-z plane.  Returns None when reference is parallel to up."""
    ref_horizontal = reference - np.dot(reference, up) * up
    norm = np.linalg.norm(ref_horizontal)
    if norm < _PARALLEL_TOL:
        return None
    b = ref_horizontal / norm
    c = up
    a = np.cross(b, c)
    return np.stack([a, b, c])


def rotation_from_gravity(
    gravity: GravityPrediction, principal: tuple[float, float] | None = None
) -> Extrinsics:
    """Build gravity-aligned extrinsics: R @ up_cam = (0, 0, 1), t = 0.

    Raises:
        GravityUnavailableError: no finite up vector in the prediction.
        DegenerateGravityError: up is parallel to the optical axis within
            1e-6, leaving yaw unconstrained by the forward axis.  Callers
            that want a best-effort rotation instead should use
            :func:`gravity_rotation_or_fallback`.
    """
    up = aggregate_up_vector(gravity, principal=principal)
    rows = _rotation_rows_from_up(up, _CAMERA_FORWARD)
    if rows is None:
        raise DegenerateGravityError("up vector is parallel to the camera forward axis")
    return Extrinsics(rotation=rows, translation=np.zeros(3))


def identity_roll_rotation(up: np.ndarray) -> Extrinsics:
    """Fallback for straight-down/up views: pin yaw with the image up axis
    (-y_cam) instead of the forward axis."""
    rows = _rotation_rows_from_up(up, _CAMERA_IMAGE_UP)
    if rows is None:
        raise DegenerateGravityError("up vector parallel to both reference axes")
    return Extrinsics(rotation=rows, translation=np.zeros(3))


def gravity_rotation_or_fallback(
    gravity: GravityPrediction, principal: tuple[float, float] | None = None
) -> tuple[Extrinsics, bool]:
    """Rotation from gravity, falling back to the identity-roll construction
    for degenerate (straight down/up) views.  Returns (extrinsics, degenerate)
    so callers can record the fallback in provenance."""
    try:
        return rotation_from_gravity(gravity, principal=principal), False
    except DegenerateGravityError:
        up = aggregate_up_vector(gravity, principal=principal)
        return identity_roll_rotation(up), True


def unproject_pixel(pixel: PixelCoord, depth: float, intrinsics: Intrinsics) -> Point3:
    """Back-project one pixel at the given depth into the camera frame:
    p_cam = depth * K^-1 [u, v, 1]^T.  The z component equals depth."""
    if not (depth > 0 and np.isfinite(depth)):
        raise ContractViolationError(f"depth {depth} must be finite and > 0")
    x = depth * (pixel.u - intrinsics.cx) / intrinsics.fx
    y = depth * (pixel.v - intrinsics.cy) / intrinsics.fy
    return Point3(x=x, y=y, z=depth, frame=Frame.CAMERA)


def project_point(point: Point3, intrinsics: Intrinsics) -> tuple[PixelCoord, float]:
    """Forward pinhole map of a camera-frame point back to (pixel, depth)."""
    if point.frame is not Frame.CAMERA:
        raise ContractViolationError("project_point expects a camera-frame point")
    if not (point.z > 0):
        raise ContractViolationError("point is behind the camera")
    u = intrinsics.fx * point.x / point.z + intrinsics.cx
    v = intrinsics.fy * point.y / point.z + intrinsics.cy
    return PixelCoord(u=u, v=v), point.z


def camera_to_world(point: Point3, extrinsics: Extrinsics) -> Point3:
    """p_world = R @ p_cam + t."""
    if point.frame is not Frame.CAMERA:
        raise ContractViolationError("camera_to_world expects a camera-frame point")
    p = extrinsics.rotation @ point.as_array() + extrinsics.translation
    return Point3(x=float(p[0]), y=float(p[1]), z=float(p[2]), frame=Frame.WORLD)


def unproject_points(uv: np.ndarray, depths: np.ndarray, intrinsics: Intrinsics) -> np.ndarray:
    """Vectorized back-projection: (n, 2) pixels + (n,) depths -> (n, 3) camera points."""
    uv = np.asarray(uv, dtype=np.float64)
    d = np.asarray(depths, dtype=np.float64)
    x = d * (uv[:, 0] - intrinsics.cx) / intrinsics.fx
    y = d * (uv[:, 1] - intrinsics.cy) / intrinsics.fy
    return np.column_stack([x, y, d])


def project_points(points: np.ndarray, intrinsics: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized forward pinhole map: (n, 3) camera points -> ((n, 2) pixels, (n,) depths)."""
    pts = np.asarray(points, dtype=np.float64)
    z = pts[:, 2]
    u = intrinsics.fx * pts[:, 0] / z + intrinsics.cx
    v = intrinsics.fy * pts[:, 1] / z + intrinsics.cy
    return np.column_stack([u, v]), z.copy()


def transform_points(points: np.ndarray, extrinsics: Extrinsics) -> np.ndarray:
    """Vectorized camera-to-world transform of (n, 3) points."""
    pts = np.asarray(points, dtype=np.float64)
    return pts @ extrinsics.rotation.T + extrinsics.translation


@dataclass
class LiftedScene:
    """World-frame point cloud with per-point provenance and labels.

    Points are ordered row-major by source pixel and all per-point arrays
    share that order.  ``point_index`` maps each pixel back to its point
    index, or -1 for invalid pixels.  Labels start at -1 (unlabeled) and are
    filled in by segmentation lifting.
    """

    width: int
    height: int
    points: np.ndarray  # (n, 3) float64, world frame
    colors: np.ndarray  # (n, 3) uint8
    pixel_rows: np.ndarray  # (n,) int32
    pixel_cols: np.ndarray  # (n,) int32
    instance_labels: np.ndarray  # (n,) int32, -1 = unlabeled
    semantic_labels: np.ndarray  # (n,) int32, -1 = unlabeled
    point_index: np.ndarray  # (height, width) int32, -1 = invalid pixel

    @property
    def point_count(self) -> int:
        return int(self.points.shape[0])

    @property
    def empty(self) -> bool:
        return self.point_count == 0

    def pixel_centers(self) -> np.ndarray:
        """(n, 2) array of the (u, v) centers each point was lifted from."""
        return np.column_stack([self.pixel_cols + 0.5, self.pixel_rows + 0.5])


def lift_depth_map(
    calibrated: CalibratedDepthMap,
    intrinsics: Intrinsics,
    extrinsics: Extrinsics,
    rgb: np.ndarray,
) -> LiftedScene:
    """Project every valid pixel of a calibrated depth map into world space.

    Each pixel is sampled at its center.  Point order is row-major by source
    pixel, so the output is deterministic and identical across worker counts.

    Raises:
        ContractViolationError: raster dimensions disagree.
    """
    h, w = calibrated.height, calibrated.width
    rgb = np.asarray(rgb)
    if rgb.shape != (h, w, 3):
        raise ContractViolationError(f"rgb shape {rgb.shape} != ({h}, {w}, 3)")
    valid = calibrated.mask.valid
    rows, cols = np.nonzero(valid)  # row-major order
    depths = calibrated.values[rows, cols]
    uv = np.column_stack([cols.astype(np.float64) + 0.5, rows.astype(np.float64) + 0.5])
    cam = unproject_points(uv, depths, intrinsics)
    world = transform_points(cam, extrinsics)

    n = rows.shape[0]
    point_index = np.full((h, w), -1, dtype=np.int32)
    point_index[rows, cols] = np.arange(n, dtype=np.int32)
    return LiftedScene(
        width=w,
        height=h,
        points=world,
        colors=rgb[rows, cols].astype(np.uint8),
        pixel_rows=rows.astype(np.int32),
        pixel_cols=cols.astype(np.int32),
        instance_labels=np.full(n, -1, dtype=np.int32),
        semantic_labels=np.full(n, -1, dtype=np.int32),
        point_index=point_index,
    )
