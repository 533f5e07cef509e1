"""Dataset statistics over lifted scenes.

Heights are vertical (z) extents of instance point sets in the gravity-
aligned world frame, reported untrimmed and with an optional 1%/99%
percentile trim (single stray points can inflate an extent).  Instance
counts and point percentages are exact counts over surviving instances and
final per-point semantic labels.  Aggregation walks scenes in manifest
order, so results are reproducible bit-exactly regardless of worker count.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractViolationError

DEFAULT_BIN_WIDTH = 0.1
DEFAULT_TRIM = (0.01, 0.99)


@dataclass
class CategoryStats:
    instance_count: int = 0
    point_count: int = 0
    heights: list = field(default_factory=list)
    trimmed_heights: list = field(default_factory=list)


@dataclass
class SceneStatistics:
    per_category: dict = field(default_factory=dict)  # category_id -> CategoryStats
    total_scenes: int = 0
    total_points: int = 0
    total_instances: int = 0
    labeled_points: int = 0

    def category(self, category_id: int) -> CategoryStats:
        return self.per_category.setdefault(int(category_id), CategoryStats())


def object_height(points: np.ndarray, trim: tuple[float, float] | None = None) -> float:
    """Vertical extent (max z - min z) of an instance's world points.

    With ``trim=(lo, hi)`` the extent runs between those z quantiles instead
    of the raw extremes.

    Raises:
        ContractViolationError: empty point set.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ContractViolationError("object_height needs at least one point")
    z = pts[:, 2]
    if trim is None:
        return float(z.max() - z.min())
    lo, hi = trim
    q_lo, q_hi = np.quantile(z, [lo, hi])
    return float(max(q_hi - q_lo, 0.0))


def collect_statistics(scenes) -> SceneStatistics:
    """Aggregate statistics from (annotations, points, semantic_labels) triples.

    ``points`` is the scene's (n, 3) world cloud and ``semantic_labels`` the
    per-point final category ids (-1 = unlabeled).  Instances contribute
    their own point index lists; point percentages use the flat label array.
    """
    stats = SceneStatistics()
    for annotations, points, semantic_labels in scenes:
        stats.total_scenes += 1
        stats.total_points += int(points.shape[0])
        labels = np.asarray(semantic_labels)
        labeled = labels >= 0
        stats.labeled_points += int(np.count_nonzero(labeled))
        for cat in np.unique(labels[labeled]):
            stats.category(int(cat)).point_count += int(np.count_nonzero(labels == cat))
        for inst in annotations.instances:
            cat = stats.category(inst.category_id)
            cat.instance_count += 1
            stats.total_instances += 1
            inst_points = points[inst.point_indices]
            cat.heights.append(object_height(inst_points))
            cat.trimmed_heights.append(object_height(inst_points, trim=DEFAULT_TRIM))
    return stats


def collect_statistics_from_manifest(manifest_path: Path) -> SceneStatistics:
    """File-based aggregation: walk Ok scenes of a manifest in order."""
    from .output import read_annotations, read_manifest, read_point_cloud

    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path.read_bytes())
    root = manifest_path.parent

    def scene_iter():
        for entry in manifest.ok_entries:
            cloud = read_point_cloud((root / entry.files["cloud"]).read_bytes())
            annotations = read_annotations((root / entry.files["annotations"]).read_bytes())
            yield annotations, cloud.points, cloud.semantic_ids

    return collect_statistics(scene_iter())


@dataclass(frozen=True)
class Histogram:
    """Counts over fixed-width bins [i*bin_width, (i+1)*bin_width)."""

    bin_width: float
    counts: tuple

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    def edges(self) -> list[float]:
        return [i * self.bin_width for i in range(len(self.counts) + 1)]


def height_histogram(
    stats: SceneStatistics,
    category_id: int,
    bin_width: float = DEFAULT_BIN_WIDTH,
    trimmed: bool = False,
) -> Histogram:
    """Histogram of a category's heights; deterministic edges starting at 0.

    Unknown categories (or categories with no instances) yield an empty
    histogram.

    Raises:
        ContractViolationError: non-positive bin width.
    """
    if not (bin_width > 0):
        raise ContractViolationError("bin_width must be > 0")
    cat = stats.per_category.get(int(category_id))
    heights = (cat.trimmed_heights if trimmed else cat.heights) if cat else []
    if not heights:
        return Histogram(bin_width=bin_width, counts=())
    indices = [int(np.floor(h / bin_width)) for h in heights]
    n_bins = max(indices) + 1
    counts = [0] * n_bins
    for i in indices:
        counts[i] += 1
    return Histogram(bin_width=bin_width, counts=tuple(counts))


def category_instance_counts(stats: SceneStatistics) -> dict:
    return {
        cat: cs.instance_count
        for cat, cs in sorted(stats.per_category.items())
        if cs.instance_count
    }


def category_point_percentages(stats: SceneStatistics) -> dict:
    """Share of labeled points per category, in percent of all labeled points."""
    if stats.labeled_points == 0:
        return {}
    return {
        cat: 100.0 * cs.point_count / stats.labeled_points
        for cat, cs in sorted(stats.per_category.items())
        if cs.point_count
    }


def write_report_json(stats: SceneStatistics, bin_width: float = DEFAULT_BIN_WIDTH) -> bytes:
    """Full statistics report: totals, counts, percentages, height summaries."""
    report = {
        "schema": "scenelift.stats@1",
        "totals": {
            "scenes": stats.total_scenes,
            "points": stats.total_points,
            "instances": stats.total_instances,
            "labeled_points": stats.labeled_points,
        },
        "instance_counts": {str(k): v for k, v in category_instance_counts(stats).items()},
        "point_percentages": {str(k): v for k, v in category_point_percentages(stats).items()},
        "heights": {},
    }
    for cat, cs in sorted(stats.per_category.items()):
        if not cs.heights:
            continue
        arr = np.asarray(cs.heights)
        trimmed = np.asarray(cs.trimmed_heights)
        report["heights"][str(cat)] = {
            "count": int(arr.size),
            "min": float(arr.min()),
            "max": float(arr.max()),
            "mean": float(arr.mean()),
            "trimmed_mean": float(trimmed.mean()),
            "histogram": list(height_histogram(stats, cat, bin_width).counts),
            "bin_width": bin_width,
        }
    return json.dumps(report, sort_keys=True, indent=1).encode("utf-8")


def write_histogram_csv(hist: Histogram, category_id: int) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["category_id", "bin_start_m", "bin_end_m", "count"])
    for i, count in enumerate(hist.counts):
        writer.writerow(
            [category_id, f"{i * hist.bin_width:.6g}", f"{(i + 1) * hist.bin_width:.6g}", count]
        )
    return buf.getvalue().encode("utf-8")


def render_histogram_svg(hist: Histogram, category_id: int, path: Path) -> None:
    """Render one category histogram to SVG (display-only output)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "scenelift"
    fig, ax = plt.subplots(figsize=(6, 3.2))
    edges = hist.edges()
    if hist.counts:
        ax.bar(
            edges[:-1],
            hist.counts,
            width=hist.bin_width,
            align="edge",
            color="#4878b0",
            edgecolor="white",
        )
    ax.set_xlabel("height (m)")
    ax.set_ylabel("instances")
    ax.set_title(f"category {category_id}")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
