"""Parsers for all upstream artifacts.

Everything the pipeline consumes arrives as files produced by external
predictors or annotation tooling:

* COCO-style instances JSON (polygons, RLE, bboxes),
* depth rasters in a minimal self-describing binary format,
* RGB rasters in the same container,
* camera prediction JSON (intrinsics + gravity).

Raster container layout (little-endian)::

    magic[4]  u32 width  u32 height  u8 dtype  f64 scale_to_meters  samples...

Depth files use magic ``DPTH`` with dtype 0 = float32, 1 = uint16
(quantized; value * scale = meters), 2 = float64.  RGB files use magic
``RGB8`` with dtype 3 = interleaved uint8 RGB.  Samples are row-major.

All parsers are pure functions over byte buffers; the returned values are
treated as immutable and are safe to share across workers.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ContractViolationError, MalformedJsonError, RasterFormatError
from .masks import PolygonSet, RleMask

logger = logging.getLogger(__name__)

RASTER_HEADER = struct.Struct("<4sIIBd")
DEPTH_MAGIC = b"DPTH"
RGB_MAGIC = b"RGB8"

DTYPE_F32 = 0
DTYPE_U16 = 1
DTYPE_F64 = 2
DTYPE_U8X3 = 3

_DEPTH_DTYPES = {DTYPE_F32: "<f4", DTYPE_U16: "<u2", DTYPE_F64: "<f8"}
_DEPTH_CODES = {"f32": DTYPE_F32, "u16": DTYPE_U16, "f64": DTYPE_F64}


class DepthKind(Enum):
    RELATIVE = "relative"
    METRIC = "metric"


@dataclass(frozen=True)
class DepthMap:
    """Dense per-pixel depth raster, relative or metric.

    Values are float64, row-major (height, width).  Undefined pixels carry
    NaN; a pixel counts as valid iff its value is finite and > 0.
    """

    width: int
    height: int
    values: np.ndarray
    kind: DepthKind

    def __post_init__(self):
        if self.values.shape != (self.height, self.width):
            raise ContractViolationError(
                f"values shape {self.values.shape} != ({self.height}, {self.width})"
            )
        finite = self.values[np.isfinite(self.values)]
        if finite.size and finite.min() < 0:
            raise ContractViolationError("DepthMap holds negative finite values")

    @property
    def unit(self) -> str:
        return "m" if self.kind is DepthKind.METRIC else "1"

    @property
    def finite_positive(self) -> np.ndarray:
        """Boolean raster of pixels that are finite and strictly positive."""
        with np.errstate(invalid="ignore"):
            return np.isfinite(self.values) & (self.values > 0)


@dataclass(frozen=True)
class IntrinsicsPrediction:
    """Pinhole intrinsics as predicted upstream, before matrix assembly."""

    focal_x: float
    focal_y: float
    principal_x: float
    principal_y: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.focal_x > 0 and self.focal_y > 0):
            raise ContractViolationError("focal lengths must be positive")
        if not (0 <= self.principal_x <= self.width and 0 <= self.principal_y <= self.height):
            raise ContractViolationError("principal point outside image bounds")


@dataclass(frozen=True)
class GravityPrediction:
    """Per-pixel or aggregate up vectors in the camera frame, plus optional latitude."""

    up: np.ndarray | None = None
    up_field: np.ndarray | None = None
    latitude: float | None = None
    latitude_field: np.ndarray | None = None

    def __post_init__(self):
        if self.up is None and self.up_field is None:
            raise ContractViolationError("gravity prediction needs up or up_field")
        for name, vecs in (("up", self.up), ("up_field", self.up_field)):
            if vecs is None:
                continue
            arr = np.asarray(vecs, dtype=np.float64)
            if arr.shape[-1] != 3:
                raise ContractViolationError(f"{name} must have 3 components per vector")
            flat = arr.reshape(-1, 3)
            finite = np.all(np.isfinite(flat), axis=1)
            norms = np.linalg.norm(flat[finite], axis=1)
            if norms.size and np.any(np.abs(norms - 1.0) > 1e-6):
                raise ContractViolationError(f"{name} vectors are not unit within 1e-6")
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class Instance2D:
    annotation_id: int
    category_id: int
    segmentation: PolygonSet | RleMask | None
    bbox: tuple | None
    iscrowd: bool = False


@dataclass(frozen=True)
class AnnotationSet2D:
    image_id: object
    width: int
    height: int
    instances: tuple = field(default_factory=tuple)


def _clamp_bbox(bbox, width: int, height: int) -> tuple:
    x, y, w, h = (float(v) for v in bbox)
    x0 = min(max(x, 0.0), float(width))
    y0 = min(max(y, 0.0), float(height))
    x1 = min(max(x + w, 0.0), float(width))
    y1 = min(max(y + h, 0.0), float(height))
    return (x0, y0, max(x1 - x0, 0.0), max(y1 - y0, 0.0))


def _parse_segmentation(seg, width: int, height: int):
    if seg is None:
        return None
    if isinstance(seg, list):
        if not seg:
            return None
        return PolygonSet.from_coco(seg)
    if isinstance(seg, dict) and "counts" in seg:
        size = seg.get("size", [height, width])
        h, w = int(size[0]), int(size[1])
        counts = seg["counts"]
        if isinstance(counts, str):
            from .masks import rle_string_to_counts

            counts = rle_string_to_counts(counts)
        return RleMask(counts=tuple(int(c) for c in counts), width=w, height=h)
    logger.warning("unrecognized segmentation payload %r; ignoring", type(seg))
    return None


def parse_coco_annotations(data: bytes, image_id) -> AnnotationSet2D:
    """Parse a COCO-style instances document for one image.

    Total over well-formed JSON: semantically odd instances (no geometry at
    all, degenerate polygons, ...) are skipped with a warning, never raised.
    Unknown category ids are kept verbatim; categories are opaque here.

    Raises:
        MalformedJsonError: the bytes are not valid JSON.
        ContractViolationError: image_id has no entry in the images list.
    """
    try:
        doc = json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise MalformedJsonError("document is not UTF-8", offset=e.start) from e
    except json.JSONDecodeError as e:
        raise MalformedJsonError(e.msg, offset=e.pos) from e

    image_entry = None
    for img in doc.get("images", []):
        if img.get("id") == image_id:
            image_entry = img
            break
    if image_entry is None:
        raise ContractViolationError(f"image id {image_id!r} not present in document")
    width = int(image_entry["width"])
    height = int(image_entry["height"])
    if width <= 0 or height <= 0:
        raise ContractViolationError("image dimensions must be positive")

    instances = []
    for idx, ann in enumerate(doc.get("annotations", [])):
        if ann.get("image_id") != image_id:
            continue
        seg = _parse_segmentation(ann.get("segmentation"), width, height)
        bbox = ann.get("bbox")
        bbox = _clamp_bbox(bbox, width, height) if bbox is not None else None
        if seg is None and bbox is None:
            logger.warning(
                "annotation %s on image %r has neither segmentation nor bbox; skipped",
                ann.get("id", idx),
                image_id,
            )
            continue
        instances.append(
            Instance2D(
                annotation_id=int(ann.get("id", idx)),
                category_id=int(ann.get("category_id", -1)),
                segmentation=seg,
                bbox=bbox,
                iscrowd=bool(ann.get("iscrowd", 0)),
            )
        )
    return AnnotationSet2D(
        image_id=image_id, width=width, height=height, instances=tuple(instances)
    )


def _read_raster_header(data: bytes, expected_magic: bytes):
    if len(data) < RASTER_HEADER.size:
        raise RasterFormatError("raster shorter than header")
    magic, width, height, dtype, scale = RASTER_HEADER.unpack_from(data, 0)
    if magic != expected_magic:
        raise RasterFormatError(f"bad magic {magic!r}, expected {expected_magic!r}")
    if width == 0 or height == 0:
        raise RasterFormatError("zero raster dimension")
    return width, height, dtype, scale


def load_depth_raster(data: bytes, kind: DepthKind) -> DepthMap:
    """Load a DPTH raster.  Quantized (u16) samples are scaled to meters;
    zero quantized samples dequantize to 0 and are therefore invalid
    downstream.  Negative finite samples are treated as undefined (NaN)."""
    width, height, dtype, scale = _read_raster_header(data, DEPTH_MAGIC)
    if dtype not in _DEPTH_DTYPES:
        raise RasterFormatError(f"unknown depth dtype code {dtype}")
    np_dtype = np.dtype(_DEPTH_DTYPES[dtype])
    expected = RASTER_HEADER.size + width * height * np_dtype.itemsize
    if len(data) != expected:
        raise RasterFormatError(f"raster payload is {len(data)} bytes, expected {expected}")
    raw = np.frombuffer(data, dtype=np_dtype, offset=RASTER_HEADER.size)
    values = raw.astype(np.float64).reshape(height, width) * float(scale)
    with np.errstate(invalid="ignore"):
        negatives = np.isfinite(values) & (values < 0)
    if negatives.any():
        logger.warning("depth raster holds %d negative samples; marked invalid", negatives.sum())
        values = np.where(negatives, np.nan, values)
    values = np.where(np.isfinite(values), values, np.nan)
    return DepthMap(width=width, height=height, values=values, kind=kind)


def write_depth_raster(depth: DepthMap, dtype: str = "f64", scale: float = 1.0) -> bytes:
    """Serialize a DepthMap into the DPTH container.

    ``scale`` is the meters-per-unit written into the header; stored samples
    are values / scale.  Use u16 with an appropriate scale for quantized
    output (NaN maps to 0, i.e. invalid).
    """
    if dtype not in _DEPTH_CODES:
        raise ValueError(f"dtype must be one of {sorted(_DEPTH_CODES)}")
    if not (scale > 0 and np.isfinite(scale)):
        raise ContractViolationError("scale must be finite and positive")
    code = _DEPTH_CODES[dtype]
    samples = depth.values / scale
    if code == DTYPE_U16:
        samples = np.where(np.isfinite(samples), samples, 0.0)
        if samples.max(initial=0.0) > 65535:
            raise ContractViolationError("u16 overflow: increase scale")
        raw = np.round(samples).astype("<u2")
    else:
        raw = samples.astype(_DEPTH_DTYPES[code])
    header = RASTER_HEADER.pack(DEPTH_MAGIC, depth.width, depth.height, code, float(scale))
    return header + raw.tobytes()


def load_rgb_raster(data: bytes) -> np.ndarray:
    """Load an RGB8 raster as a (height, width, 3) uint8 array."""
    width, height, dtype, _scale = _read_raster_header(data, RGB_MAGIC)
    if dtype != DTYPE_U8X3:
        raise RasterFormatError(f"unknown rgb dtype code {dtype}")
    expected = RASTER_HEADER.size + width * height * 3
    if len(data) != expected:
        raise RasterFormatError(f"raster payload is {len(data)} bytes, expected {expected}")
    raw = np.frombuffer(data, dtype=np.uint8, offset=RASTER_HEADER.size)
    return raw.reshape(height, width, 3).copy()


def write_rgb_raster(rgb: np.ndarray) -> bytes:
    rgb = np.asarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ContractViolationError("rgb must be (height, width, 3)")
    height, width = rgb.shape[:2]
    header = RASTER_HEADER.pack(RGB_MAGIC, width, height, DTYPE_U8X3, 1.0)
    return header + rgb.tobytes()


@dataclass(frozen=True)
class CameraPrediction:
    intrinsics: IntrinsicsPrediction
    gravity: GravityPrediction


def load_camera_prediction(path: Path) -> CameraPrediction:
    """Load a camera prediction JSON file.

    Schema: ``{fx, fy, cx, cy, width, height, up: [3] | up_field: <npy path>,
    latitude: float | latitude_field: <npy path>}``.  Field paths are
    resolved relative to the JSON file's directory.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as e:
        raise MalformedJsonError(f"{path}: {e.msg}", offset=e.pos) from e
    intr = IntrinsicsPrediction(
        focal_x=float(doc["fx"]),
        focal_y=float(doc["fy"]),
        principal_x=float(doc["cx"]),
        principal_y=float(doc["cy"]),
        width=int(doc["width"]),
        height=int(doc["height"]),
    )
    up = np.asarray(doc["up"], dtype=np.float64) if "up" in doc else None
    up_field = None
    if "up_field" in doc:
        up_field = np.load(path.parent / doc["up_field"])
    latitude = float(doc["latitude"]) if "latitude" in doc else None
    latitude_field = None
    if "latitude_field" in doc:
        latitude_field = np.load(path.parent / doc["latitude_field"])
    gravity = GravityPrediction(
        up=up, up_field=up_field, latitude=latitude, latitude_field=latitude_field
    )
    return CameraPrediction(intrinsics=intr, gravity=gravity)


def write_camera_prediction(
    path: Path,
    intrinsics: IntrinsicsPrediction,
    up: np.ndarray | None = None,
    up_field: np.ndarray | None = None,
    latitude: float | None = None,
) -> None:
    path = Path(path)
    doc: dict = {
        "fx": intrinsics.focal_x,
        "fy": intrinsics.focal_y,
        "cx": intrinsics.principal_x,
        "cy": intrinsics.principal_y,
        "width": intrinsics.width,
        "height": intrinsics.height,
    }
    if up is not None:
        doc["up"] = [float(v) for v in np.asarray(up).reshape(3)]
    if up_field is not None:
        field_name = path.stem + ".up.npy"
        np.save(path.parent / field_name, np.asarray(up_field, dtype=np.float64))
        doc["up_field"] = field_name
    if latitude is not None:
        doc["latitude"] = float(latitude)
    path.write_text(json.dumps(doc, sort_keys=True, indent=1), "utf-8")
