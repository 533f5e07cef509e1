"""Batch orchestration: per-scene lifting across a dataset.

A scene is lifted by the fixed composition
resample -> validity mask -> scale factor -> calibrate -> intrinsics /
gravity rotation -> lift -> annotations.  Failures never abort the batch:
every scene lands in the manifest as Ok or Rejected with a machine-readable
reason.  All per-scene work is pure, so scenes run on a bounded worker pool
and outputs are byte-identical for any worker count; the manifest is
committed once, ordered by scene id.

Inputs are discovered by stem: ``<relative_depth_root>/<scene>.dpt`` drives
the scene list, with matching files expected in the other roots and one
COCO instances document shared by all scenes (mapped by ``file_name`` stem).
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .annolift import SceneAnnotations3D, build_scene_annotations
from .calibration import (
    FilterPolicy,
    calibrate_depth,
    compute_scale_factor,
    compute_validity_mask,
)
from .camera import (
    LiftedScene,
    gravity_rotation_or_fallback,
    intrinsics_from_prediction,
    lift_depth_map,
)
from .errors import (
    ContractViolationError,
    DegenerateRelativeDepthError,
    GravityUnavailableError,
    InsufficientValidPointsError,
    MalformedJsonError,
    RasterFormatError,
    SceneLiftError,
)
from .ingest import (
    AnnotationSet2D,
    CameraPrediction,
    DepthKind,
    DepthMap,
    GravityPrediction,
    IntrinsicsPrediction,
    load_camera_prediction,
    load_depth_raster,
    load_rgb_raster,
    parse_coco_annotations,
)
from .masks import BitMask, encode_rle_mask
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

logger = logging.getLogger(__name__)

# Rejection reason codes; every Rejected manifest entry carries exactly one.
REASON_MISSING_INPUT = "missing-input"
REASON_DIMENSION_MISMATCH = "dimension-mismatch"
REASON_INSUFFICIENT_VALID_POINTS = "insufficient-valid-points"
REASON_DEGENERATE_RELATIVE_DEPTH = "degenerate-relative-depth"
REASON_GRAVITY_UNAVAILABLE = "gravity-unavailable"
REASON_BAD_INTRINSICS = "bad-intrinsics"
REASON_NO_VALID_OBJECTS = "no-valid-objects"
REASON_MALFORMED_INPUT = "malformed-input"
REASON_INTERNAL_ERROR = "internal-error"


@dataclass(frozen=True)
class PipelineConfig:
    images_root: Path
    relative_depth_root: Path
    metric_depth_root: Path
    cameras_root: Path
    annotations_path: Path
    output_root: Path
    filter_policy: FilterPolicy = field(default_factory=FilterPolicy)
    resample: str = "nearest"
    workers: int = 1
    review_count: int = 8
    review_seed: int = 0

    def __post_init__(self):
        if self.workers < 1:
            raise ContractViolationError("worker count must be >= 1")
        if self.resample != "nearest":
            raise ContractViolationError(f"unknown resampling policy {self.resample!r}")
        for name in (
            "images_root",
            "relative_depth_root",
            "metric_depth_root",
            "cameras_root",
            "annotations_path",
            "output_root",
        ):
            object.__setattr__(self, name, Path(getattr(self, name)))

    @classmethod
    def from_file(cls, path: Path, **overrides) -> "PipelineConfig":
        """Load the declarative config file; relative paths resolve against it."""
        path = Path(path)
        doc = json.loads(path.read_text("utf-8"))
        base = path.parent

        def resolve(key):
            return base / doc[key]

        fp = doc.get("filter", {})
        policy = FilterPolicy(
            edge_margin_px=int(fp.get("edge_margin_px", 2)),
            outlier_k=float(fp.get("outlier_k", 3.0)),
            outlier_enabled=bool(fp.get("outlier_enabled", True)),
            min_valid_points=int(fp.get("min_valid_points", 16)),
        )
        review = doc.get("review", {})
        config = cls(
            images_root=resolve("images"),
            relative_depth_root=resolve("depth_relative"),
            metric_depth_root=resolve("depth_metric"),
            cameras_root=resolve("cameras"),
            annotations_path=resolve("annotations"),
            output_root=base / doc.get("output", "run"),
            filter_policy=policy,
            resample=doc.get("resample", "nearest"),
            workers=int(doc.get("workers", 1)),
            review_count=int(review.get("n", 8)),
            review_seed=int(review.get("seed", 0)),
        )
        return replace(config, **overrides) if overrides else config

    def fingerprint(self) -> str:
        """Content hash of the data-affecting configuration.

        Execution-only fields (workers, output root, review sampling) are
        excluded so reruns with different parallelism or destinations remain
        byte-comparable.
        """
        payload = {
            "images": self.images_root.as_posix(),
            "depth_relative": self.relative_depth_root.as_posix(),
            "depth_metric": self.metric_depth_root.as_posix(),
            "cameras": self.cameras_root.as_posix(),
            "annotations": self.annotations_path.as_posix(),
            "resample": self.resample,
            "filter": {
                "edge_margin_px": self.filter_policy.edge_margin_px,
                "outlier_k": self.filter_policy.outlier_k,
                "outlier_enabled": self.filter_policy.outlier_enabled,
                "min_valid_points": self.filter_policy.min_valid_points,
            },
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def _validity_rle(valid: np.ndarray) -> list[int]:
    h, w = valid.shape
    return encode_rle_mask(BitMask(width=w, height=h, bits=valid))


@dataclass(frozen=True)
class SceneInputs:
    scene_id: str
    image_path: Path
    relative_depth_path: Path
    metric_depth_path: Path
    camera_path: Path


@dataclass
class LiftResult:
    scene_id: str
    image_id: object
    status: str  # "ok" | "rejected"
    reason: str | None = None
    scene: LiftedScene | None = None
    annotations: SceneAnnotations3D | None = None
    provenance: dict | None = None


def _resample_nearest(values: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    h, w = values.shape
    if (h, w) == (target_h, target_w):
        return values
    src_rows = np.floor((np.arange(target_h) + 0.5) * h / target_h).astype(np.int64)
    src_cols = np.floor((np.arange(target_w) + 0.5) * w / target_w).astype(np.int64)
    src_rows = np.clip(src_rows, 0, h - 1)
    src_cols = np.clip(src_cols, 0, w - 1)
    return values[np.ix_(src_rows, src_cols)]


def resample_to_common_grid(
    d_r: DepthMap, d_m: DepthMap, target: tuple[int, int]
) -> tuple[DepthMap, DepthMap]:
    """Nearest-neighbor resample both maps to (height, width).

    Nearest-neighbor never interpolates, so no depth values are invented
    across validity boundaries and invalid pixels stay invalid.

    Raises:
        ContractViolationError: zero target dimensions.
    """
    target_h, target_w = target
    if target_h <= 0 or target_w <= 0:
        raise ContractViolationError("target dimensions must be positive")

    def resample(depth: DepthMap) -> DepthMap:
        if (depth.height, depth.width) == (target_h, target_w):
            return depth
        return DepthMap(
            width=target_w,
            height=target_h,
            values=_resample_nearest(depth.values, target_h, target_w).copy(),
            kind=depth.kind,
        )

    return resample(d_r), resample(d_m)


def lift_from_arrays(
    d_r: DepthMap,
    d_m: DepthMap,
    rgb: np.ndarray,
    intrinsics_pred: IntrinsicsPrediction,
    gravity: GravityPrediction,
    set2d: AnnotationSet2D,
    policy: FilterPolicy,
    scene_id: str,
    image_id: object = None,
) -> LiftResult:
    """Lift one scene from in-memory inputs (the full per-scene composition)."""
    result = LiftResult(scene_id=scene_id, image_id=image_id, status="rejected")
    target = (rgb.shape[0], rgb.shape[1])
    if (set2d.height, set2d.width) != target:
        result.reason = REASON_DIMENSION_MISMATCH
        return result
    if (intrinsics_pred.height, intrinsics_pred.width) != target:
        result.reason = REASON_DIMENSION_MISMATCH
        return result
    d_r, d_m = resample_to_common_grid(d_r, d_m, target)

    mask = compute_validity_mask(d_r, d_m, policy)
    try:
        scale = compute_scale_factor(
            d_r, d_m, mask, min_valid_points=policy.min_valid_points
        )
    except InsufficientValidPointsError:
        result.reason = REASON_INSUFFICIENT_VALID_POINTS
        return result
    except DegenerateRelativeDepthError:
        result.reason = REASON_DEGENERATE_RELATIVE_DEPTH
        return result
    calibrated = calibrate_depth(d_r, scale, mask)

    try:
        intrinsics = intrinsics_from_prediction(intrinsics_pred)
    except ContractViolationError:
        result.reason = REASON_BAD_INTRINSICS
        return result
    try:
        extrinsics, degenerate = gravity_rotation_or_fallback(
            gravity, principal=(intrinsics.cx, intrinsics.cy)
        )
    except GravityUnavailableError:
        result.reason = REASON_GRAVITY_UNAVAILABLE
        return result

    scene = lift_depth_map(calibrated, intrinsics, extrinsics, rgb)
    if scene.empty:
        result.reason = REASON_INSUFFICIENT_VALID_POINTS
        return result
    annotations = build_scene_annotations(
        set2d, scene, calibrated, intrinsics, extrinsics, scene_id=scene_id
    )
    if annotations.rejected:
        result.reason = REASON_NO_VALID_OBJECTS
        return result

    result.status = "ok"
    result.reason = None
    result.scene = scene
    result.annotations = annotations
    result.provenance = {
        "scale": {
            "s": scale.s,
            "valid_count": scale.valid_count,
            "mean_metric": scale.mean_metric,
            "mean_relative": scale.mean_relative,
        },
        "gravity": {
            "degenerate_fallback": degenerate,
            "latitude": gravity.latitude,
        },
        "grid": [scene.height, scene.width],
        "valid_rle": _validity_rle(calibrated.mask.valid),
    }
    return result


def discover_scenes(config: PipelineConfig) -> list[SceneInputs]:
    """Scene list from the relative-depth root; one entry per *.dpt stem."""
    scenes = []
    for path in sorted(config.relative_depth_root.glob("*.dpt")):
        scene_id = path.stem
        scenes.append(
            SceneInputs(
                scene_id=scene_id,
                image_path=config.images_root / f"{scene_id}.rgb",
                relative_depth_path=path,
                metric_depth_path=config.metric_depth_root / f"{scene_id}.dpt",
                camera_path=config.cameras_root / f"{scene_id}.json",
            )
        )
    return scenes


def _image_id_by_stem(annotations_path: Path) -> dict:
    doc = json.loads(annotations_path.read_text("utf-8"))
    mapping = {}
    for img in doc.get("images", []):
        stem = Path(str(img.get("file_name", img["id"]))).stem
        mapping[stem] = img["id"]
    return mapping


def lift_scene(inputs: SceneInputs, config: PipelineConfig, image_id=None) -> LiftResult:
    """File-based per-scene lift.  Never raises for per-scene problems; every
    failure becomes a Rejected result with a reason code."""
    if image_id is None:
        image_id = _image_id_by_stem(config.annotations_path).get(inputs.scene_id)
    result = LiftResult(scene_id=inputs.scene_id, image_id=image_id, status="rejected")
    try:
        for path in (
            inputs.image_path,
            inputs.relative_depth_path,
            inputs.metric_depth_path,
            inputs.camera_path,
        ):
            if not path.exists():
                result.reason = REASON_MISSING_INPUT
                return result
        if image_id is None:
            result.reason = REASON_MISSING_INPUT
            return result
        rgb = load_rgb_raster(inputs.image_path.read_bytes())
        d_r = load_depth_raster(inputs.relative_depth_path.read_bytes(), DepthKind.RELATIVE)
        d_m = load_depth_raster(inputs.metric_depth_path.read_bytes(), DepthKind.METRIC)
        camera: CameraPrediction = load_camera_prediction(inputs.camera_path)
        set2d = parse_coco_annotations(config.annotations_path.read_bytes(), image_id)
        return lift_from_arrays(
            d_r,
            d_m,
            rgb,
            camera.intrinsics,
            camera.gravity,
            set2d,
            config.filter_policy,
            scene_id=inputs.scene_id,
            image_id=image_id,
        )
    except (RasterFormatError, MalformedJsonError, ContractViolationError) as e:
        logger.warning("scene %s rejected: %s", inputs.scene_id, e)
        result.reason = REASON_MALFORMED_INPUT
        return result
    except SceneLiftError as e:
        logger.warning("scene %s rejected: %s", inputs.scene_id, e)
        result.reason = REASON_INTERNAL_ERROR
        return result
    except Exception:
        logger.exception("scene %s failed unexpectedly", inputs.scene_id)
        result.reason = REASON_INTERNAL_ERROR
        return result


def _scene_file_names(scene_id: str) -> dict:
    return {
        "cloud": f"scenes/{scene_id}.ply",
        "annotations": f"scenes/{scene_id}.anno.json",
    }


def _process_and_write(args) -> SceneEntry:
    inputs, config, image_id = args
    result = lift_scene(inputs, config, image_id=image_id)
    if result.status != "ok":
        return SceneEntry(
            scene_id=result.scene_id,
            image_id=result.image_id,
            status="rejected",
            reason=result.reason,
        )
    files = _scene_file_names(result.scene_id)
    cloud_path = config.output_root / files["cloud"]
    anno_path = config.output_root / files["annotations"]
    cloud_path.parent.mkdir(parents=True, exist_ok=True)
    cloud_path.write_bytes(write_point_cloud(result.scene))
    anno_path.write_bytes(write_annotations(result.annotations, provenance=result.provenance))
    return SceneEntry(
        scene_id=result.scene_id,
        image_id=result.image_id,
        status="ok",
        files=files,
        point_count=result.scene.point_count,
        instance_count=len(result.annotations.instances),
    )


def run_batch(config: PipelineConfig, resume: bool = False) -> DatasetManifest:
    """Lift every discovered scene and commit the manifest.

    Every input scene appears exactly once, Ok or Rejected.  With ``resume``
    the existing manifest is honored and already-recorded scenes are not
    reprocessed.

    Raises:
        SceneLiftError: the output root cannot be created (startup error).
    """
    try:
        config.output_root.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise SceneLiftError(f"cannot create output root {config.output_root}: {e}") from e
    manifest_path = config.output_root / "manifest.jsonl"

    done: dict[str, SceneEntry] = {}
    if resume and manifest_path.exists():
        previous = read_manifest(manifest_path.read_bytes())
        if previous.config_fingerprint != config.fingerprint():
            logger.warning(
                "resuming over a manifest built with a different config "
                "(fingerprint %s vs %s); previously-done scenes are kept as-is",
                previous.config_fingerprint[:12],
                config.fingerprint()[:12],
            )
        done = {e.scene_id: e for e in previous.entries}

    scenes = discover_scenes(config)
    id_map = _image_id_by_stem(config.annotations_path) if config.annotations_path.exists() else {}
    pending = [s for s in scenes if s.scene_id not in done]
    logger.info("lifting %d scenes (%d already done) with %d workers",
                len(pending), len(done), config.workers)

    jobs = [(s, config, id_map.get(s.scene_id)) for s in pending]
    entries = list(done.values())
    if config.workers == 1 or len(jobs) <= 1:
        entries.extend(_process_and_write(job) for job in jobs)
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            entries.extend(pool.map(_process_and_write, jobs))

    manifest = DatasetManifest(
        entries=entries,
        config_fingerprint=config.fingerprint(),
        tool_version=__version__,
    )
    manifest_path.write_bytes(write_manifest(manifest))
    return manifest


def sample_for_review(
    manifest: DatasetManifest,
    config: PipelineConfig,
    n: int,
    seed: int,
    review_dir: Path,
    output_root: Path | None = None,
) -> list[str]:
    """Copy a seeded deterministic sample of Ok scenes for manual inspection.

    Each sampled scene gets its source image and a mask overlay as PNGs next
    to copies of its point-cloud and annotation files.  ``n`` larger than
    the Ok count is clamped with a warning.  ``output_root`` defaults to the
    config's; pass the manifest's directory when the run was redirected.
    """
    output_root = Path(output_root) if output_root is not None else config.output_root
    ok = manifest.ok_entries
    if n > len(ok):
        logger.warning("review sample %d clamped to %d Ok scenes", n, len(ok))
        n = len(ok)
    if n < 0:
        raise ContractViolationError("sample size must be >= 0")
    review_dir = Path(review_dir)
    review_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(ok), size=n, replace=False).tolist()) if n else []
    sampled = []
    for idx in chosen:
        entry = ok[idx]
        scene_dir = review_dir / entry.scene_id
        scene_dir.mkdir(exist_ok=True)
        for rel in entry.files.values():
            shutil.copyfile(output_root / rel, scene_dir / Path(rel).name)
        _write_review_images(entry, config, output_root, scene_dir)
        sampled.append(entry.scene_id)
    return sampled


def _write_review_images(
    entry: SceneEntry, config: PipelineConfig, output_root: Path, scene_dir: Path
) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    image_path = config.images_root / f"{entry.scene_id}.rgb"
    if not image_path.exists():
        return
    rgb = load_rgb_raster(image_path.read_bytes())
    plt.imsave(scene_dir / "source.png", rgb)

    anno = read_annotations((output_root / entry.files["annotations"]).read_bytes())
    prov = json.loads(
        (output_root / entry.files["annotations"]).read_text("utf-8")
    ).get("provenance", {})
    overlay = rgb.astype(np.float64)
    if prov.get("valid_rle") and prov.get("grid"):
        from .masks import decode_rle_mask

        h, w = prov["grid"]
        valid_bits = decode_rle_mask(prov["valid_rle"], w, h).bits
        rows, cols = np.nonzero(valid_bits)
        for inst in anno.instances:
            color = np.array(
                [
                    (37 * inst.category_id + 89) % 256,
                    (113 * inst.category_id + 40) % 256,
                    (211 * inst.category_id + 150) % 256,
                ],
                dtype=np.float64,
            )
            r = rows[inst.point_indices]
            c = cols[inst.point_indices]
            overlay[r, c] = 0.45 * overlay[r, c] + 0.55 * color
    plt.imsave(scene_dir / "overlay.png", overlay.clip(0, 255).astype(np.uint8))


def verify_outputs(manifest_path: Path) -> list[str]:
    """Re-parse everything an Ok manifest entry points at and check invariants.

    Returns a list of human-readable problems (empty = all good): missing or
    unparseable files, count mismatches, empty instances, out-of-range point
    indices, and instance points escaping their 3D box (beyond float32
    quantization slack).
    """
    manifest_path = Path(manifest_path)
    problems: list[str] = []
    manifest = read_manifest(manifest_path.read_bytes())
    root = manifest_path.parent
    for entry in manifest.entries:
        if entry.status != "ok":
            continue
        try:
            cloud = read_point_cloud((root / entry.files["cloud"]).read_bytes())
            anno = read_annotations((root / entry.files["annotations"]).read_bytes())
        except (OSError, SceneLiftError) as e:
            problems.append(f"{entry.scene_id}: unreadable outputs ({e})")
            continue
        if cloud.point_count != entry.point_count:
            problems.append(
                f"{entry.scene_id}: manifest says {entry.point_count} points, "
                f"file has {cloud.point_count}"
            )
        if len(anno.instances) != entry.instance_count:
            problems.append(
                f"{entry.scene_id}: manifest says {entry.instance_count} instances, "
                f"file has {len(anno.instances)}"
            )
        if not anno.instances:
            problems.append(f"{entry.scene_id}: Ok scene with zero instances")
        for inst in anno.instances:
            if inst.point_indices.size == 0:
                problems.append(
                    f"{entry.scene_id}: instance {inst.instance_id} has no points"
                )
                continue
            if inst.point_indices.max() >= cloud.point_count:
                problems.append(
                    f"{entry.scene_id}: instance {inst.instance_id} indexes past the cloud"
                )
                continue
            if inst.box is not None:
                pts = cloud.points[inst.point_indices]
                # float32 storage: allow quantization slack proportional to magnitude
                span = max(1.0, float(np.abs(pts).max()))
                inside = inst.box.contains(pts, eps=1e-5 * span)
                if not inside.all():
                    problems.append(
                        f"{entry.scene_id}: instance {inst.instance_id} has "
                        f"{int((~inside).sum())} points outside its box"
                    )
    return problems
