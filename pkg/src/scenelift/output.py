"""Serialization of lifted scenes: binary PLY, annotation JSON, manifest.

All writers are deterministic: identical inputs yield byte-identical output.
Points are stored as float32 (sub-millimeter at room scale, compact at
dataset scale); labels are int32 with -1 meaning unlabeled.  The manifest is
JSON lines - a header line followed by one line per scene ordered by scene
id - so multi-worker runs can be committed and resumed safely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .annolift import Box3D, InstanceAnnotation3D, SceneAnnotations3D
from .camera import LiftedScene
from .errors import ContractViolationError, ManifestError

PLY_VERTEX_DTYPE = np.dtype(
    [
        ("x", "<f4"),
        ("y", "<f4"),
        ("z", "<f4"),
        ("red", "u1"),
        ("green", "u1"),
        ("blue", "u1"),
        ("instance_id", "<i4"),
        ("semantic_id", "<i4"),
    ]
)

ANNOTATION_SCHEMA = "scenelift.annotations@1"
MANIFEST_SCHEMA = "scenelift.manifest@1"

_PLY_HEADER_TEMPLATE = """ply
format binary_little_endian 1.0
element vertex {count}
property float x
property float y
property float z
property uchar red
property uchar green
property uchar blue
property int instance_id
property int semantic_id
end_header
"""


@dataclass
class PointCloudData:
    """Arrays read back from a PLY file (float32 storage widened to float64)."""

    points: np.ndarray
    colors: np.ndarray
    instance_ids: np.ndarray
    semantic_ids: np.ndarray

    @property
    def point_count(self) -> int:
        return int(self.points.shape[0])


def write_point_cloud(scene: LiftedScene) -> bytes:
    """Serialize a scene as binary little-endian PLY, one vertex per point.

    Raises:
        ContractViolationError: the scene is empty (it should have been
            rejected upstream, never written).
    """
    n = scene.point_count
    if n == 0:
        raise ContractViolationError("refusing to write an empty scene")
    rec = np.empty(n, dtype=PLY_VERTEX_DTYPE)
    rec["x"] = scene.points[:, 0]
    rec["y"] = scene.points[:, 1]
    rec["z"] = scene.points[:, 2]
    rec["red"] = scene.colors[:, 0]
    rec["green"] = scene.colors[:, 1]
    rec["blue"] = scene.colors[:, 2]
    rec["instance_id"] = scene.instance_labels
    rec["semantic_id"] = scene.semantic_labels
    header = _PLY_HEADER_TEMPLATE.format(count=n)
    return header.encode("ascii") + rec.tobytes()


def read_point_cloud(data: bytes) -> PointCloudData:
    """Parse a PLY produced by :func:`write_point_cloud`."""
    end_marker = b"end_header\n"
    end = data.find(end_marker)
    if end < 0:
        raise ContractViolationError("not a PLY: missing end_header")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    if not header or header[0] != "ply":
        raise ContractViolationError("not a PLY: missing magic")
    if "format binary_little_endian 1.0" not in header:
        raise ContractViolationError("unsupported PLY format")
    count = None
    for line in header:
        if line.startswith("element vertex "):
            count = int(line.split()[-1])
    if count is None:
        raise ContractViolationError("PLY header lacks a vertex element")
    body = data[end + len(end_marker) :]
    expected = count * PLY_VERTEX_DTYPE.itemsize
    if len(body) != expected:
        raise ContractViolationError(
            f"PLY body is {len(body)} bytes, expected {expected} for {count} vertices"
        )
    rec = np.frombuffer(body, dtype=PLY_VERTEX_DTYPE)
    points = np.column_stack([rec["x"], rec["y"], rec["z"]]).astype(np.float64)
    colors = np.column_stack([rec["red"], rec["green"], rec["blue"]])
    return PointCloudData(
        points=points,
        colors=colors,
        instance_ids=rec["instance_id"].astype(np.int32),
        semantic_ids=rec["semantic_id"].astype(np.int32),
    )


def _box_to_json(box: Box3D | None):
    if box is None:
        return None
    return {
        "center": [float(v) for v in box.center],
        "extents": [float(v) for v in box.extents],
    }


def write_annotations(annotations: SceneAnnotations3D, provenance: dict | None = None) -> bytes:
    """Serialize lifted annotations as versioned JSON.

    Raises:
        ContractViolationError: zero instances (rejected scenes are never
            written).
    """
    if annotations.rejected:
        raise ContractViolationError("refusing to write annotations with zero instances")
    doc = {
        "schema": ANNOTATION_SCHEMA,
        "scene_id": annotations.scene_id,
        "instances": [
            {
                "instance_id": int(inst.instance_id),
                "category_id": int(inst.category_id),
                "point_indices": [int(i) for i in inst.point_indices],
                "box": _box_to_json(inst.box),
            }
            for inst in annotations.instances
        ],
    }
    if provenance is not None:
        doc["provenance"] = provenance
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def read_annotations(data: bytes) -> SceneAnnotations3D:
    doc = json.loads(data.decode("utf-8"))
    if doc.get("schema") != ANNOTATION_SCHEMA:
        raise ContractViolationError(f"unknown annotation schema {doc.get('schema')!r}")
    instances = []
    for inst in doc["instances"]:
        box = None
        if inst.get("box") is not None:
            box = Box3D(
                center=np.asarray(inst["box"]["center"], dtype=np.float64),
                extents=np.asarray(inst["box"]["extents"], dtype=np.float64),
                instance_id=int(inst["instance_id"]),
                category_id=int(inst["category_id"]),
            )
        instances.append(
            InstanceAnnotation3D(
                instance_id=int(inst["instance_id"]),
                category_id=int(inst["category_id"]),
                point_indices=np.asarray(inst["point_indices"], dtype=np.int32),
                box=box,
            )
        )
    return SceneAnnotations3D(scene_id=doc["scene_id"], instances=instances)


def read_annotation_provenance(data: bytes) -> dict | None:
    return json.loads(data.decode("utf-8")).get("provenance")


@dataclass(frozen=True)
class SceneEntry:
    scene_id: str
    image_id: object
    status: str  # "ok" | "rejected"
    reason: str | None = None
    files: dict = field(default_factory=dict)  # paths relative to the output root
    point_count: int = 0
    instance_count: int = 0

    def __post_init__(self):
        if self.status not in ("ok", "rejected"):
            raise ManifestError(f"invalid status {self.status!r}")


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    config_fingerprint: str = ""
    tool_version: str = ""

    def __post_init__(self):
        ids = [e.scene_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ManifestError("duplicate scene ids in manifest")
        self.entries = sorted(self.entries, key=lambda e: e.scene_id)

    @property
    def ok_entries(self) -> list:
        return [e for e in self.entries if e.status == "ok"]

    @property
    def rejected_entries(self) -> list:
        return [e for e in self.entries if e.status == "rejected"]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DatasetManifest):
            return NotImplemented
        return (
            self.entries == other.entries
            and self.config_fingerprint == other.config_fingerprint
            and self.tool_version == other.tool_version
        )


def write_manifest(manifest: DatasetManifest) -> bytes:
    """JSON lines: header line, then one line per scene sorted by scene id."""
    lines = [
        json.dumps(
            {
                "schema": MANIFEST_SCHEMA,
                "config_fingerprint": manifest.config_fingerprint,
                "tool_version": manifest.tool_version,
            },
            sort_keys=True,
            separators=(",", ":"),
        )
    ]
    seen = set()
    for entry in sorted(manifest.entries, key=lambda e: e.scene_id):
        if entry.scene_id in seen:
            raise ManifestError(f"duplicate scene id {entry.scene_id!r}")
        seen.add(entry.scene_id)
        lines.append(
            json.dumps(
                {
                    "scene_id": entry.scene_id,
                    "image_id": entry.image_id,
                    "status": entry.status,
                    "reason": entry.reason,
                    "files": entry.files,
                    "point_count": entry.point_count,
                    "instance_count": entry.instance_count,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def read_manifest(data: bytes) -> DatasetManifest:
    lines = data.decode("utf-8").splitlines()
    if not lines:
        raise ManifestError("empty manifest")
    header = json.loads(lines[0])
    if header.get("schema") != MANIFEST_SCHEMA:
        raise ManifestError(f"unknown manifest schema {header.get('schema')!r}")
    entries = []
    seen = set()
    for line in lines[1:]:
        if not line.strip():
            continue
        raw = json.loads(line)
        if raw["scene_id"] in seen:
            raise ManifestError(f"duplicate scene id {raw['scene_id']!r}")
        seen.add(raw["scene_id"])
        entries.append(
            SceneEntry(
                scene_id=raw["scene_id"],
                image_id=raw["image_id"],
                status=raw["status"],
                reason=raw.get("reason"),
                files=raw.get("files", {}),
                point_count=int(raw.get("point_count", 0)),
                instance_count=int(raw.get("instance_count", 0)),
            )
        )
    return DatasetManifest(
        entries=entries,
        config_fingerprint=header.get("config_fingerprint", ""),
        tool_version=header.get("tool_version", ""),
    )
