"""Statistics tests: heights, histograms, counts, percentages."""

from __future__ import annotations

import numpy as np
import pytest

from scenelift.annolift import InstanceAnnotation3D, SceneAnnotations3D
from scenelift.errors import ContractViolationError
from scenelift.stats import (
    category_instance_counts,
    category_point_percentages,
    collect_statistics,
    height_histogram,
    object_height,
    write_histogram_csv,
    write_report_json,
)


def scene_triple(instances_spec, rng=None):
    """Build an (annotations, points, semantic_labels) triple from
    {category: [list of z-column point sets]} specs."""
    points = []
    labels = []
    instances = []
    instance_id = 1
    for category, point_sets in instances_spec.items():
        for zs in point_sets:
            idx_start = len(points)
            for z in zs:
                points.append([0.0, 0.0, z])
                labels.append(category)
            instances.append(
                InstanceAnnotation3D(
                    instance_id=instance_id,
                    category_id=category,
                    point_indices=np.arange(idx_start, len(points), dtype=np.int32),
                )
            )
            instance_id += 1
    annos = SceneAnnotations3D(scene_id=f"s{id(instances_spec) % 997}", instances=instances)
    return annos, np.asarray(points, dtype=np.float64).reshape(-1, 3), np.asarray(labels)


class TestObjectHeight:
    def test_single_point_is_zero(self):
        assert object_height(np.array([[1.0, 2.0, 3.0]])) == 0.0

    def test_two_point_subtraction(self):
        pts = np.array([[0, 0, 0.3], [0, 0, 1.9]])
        assert object_height(pts) == pytest.approx(1.6)

    def test_empty_raises(self):
        with pytest.raises(ContractViolationError):
            object_height(np.zeros((0, 3)))

    def test_invariant_under_horizontal_motion_and_permutation(self, rng):
        pts = rng.normal(size=(50, 3))
        h0 = object_height(pts)
        shifted = pts + np.array([17.0, -4.0, 0.0])
        perm = shifted[rng.permutation(50)]
        assert object_height(perm) == pytest.approx(h0, rel=1e-15)

    def test_trimmed_mode_discounts_stray_point(self, rng):
        zs = np.concatenate([rng.uniform(0, 1.0, size=200), [50.0]])
        pts = np.column_stack([np.zeros_like(zs), np.zeros_like(zs), zs])
        assert object_height(pts) > 49
        assert object_height(pts, trim=(0.01, 0.99)) < 2.0


class TestHistogram:
    def test_zero_instances_all_zero(self):
        stats = collect_statistics([])
        hist = height_histogram(stats, category_id=1, bin_width=1.0)
        assert hist.counts == ()
        assert hist.total == 0

    def test_hand_counted_bins(self):
        # heights [0.5, 0.6, 1.9] with bin 1.0 -> [2, 1]
        triple = scene_triple({1: [[0.0, 0.5], [0.0, 0.6], [0.0, 1.9]]})
        stats = collect_statistics([triple])
        hist = height_histogram(stats, 1, bin_width=1.0)
        assert hist.counts == (2, 1)

    def test_histogram_total_equals_instance_count(self, rng):
        point_sets = [list(rng.uniform(0, 3, size=rng.integers(2, 6))) for _ in range(9)]
        stats = collect_statistics([scene_triple({2: point_sets})])
        hist = height_histogram(stats, 2, bin_width=0.25)
        assert hist.total == stats.per_category[2].instance_count == 9

    def test_planted_uniform_heights_stay_in_range(self, rng):
        # heights planted uniform on [0.5, 2.0]: histogram support stays inside
        heights = rng.uniform(0.5, 2.0, size=40)
        point_sets = [[0.0, h] for h in heights]
        stats = collect_statistics([scene_triple({3: point_sets})])
        hist = height_histogram(stats, 3, bin_width=0.1)
        support = [
            (i * hist.bin_width, (i + 1) * hist.bin_width)
            for i, c in enumerate(hist.counts)
            if c
        ]
        assert support[0][0] >= 0.5 - 0.1
        assert support[-1][1] <= 2.0 + 0.1
        assert hist.total == 40

    def test_bad_bin_width(self):
        stats = collect_statistics([])
        with pytest.raises(ContractViolationError):
            height_histogram(stats, 1, bin_width=0.0)


class TestCounts:
    def test_empty_dataset(self):
        stats = collect_statistics([])
        assert category_instance_counts(stats) == {}
        assert category_point_percentages(stats) == {}

    def test_two_scene_addition(self):
        s1 = scene_triple({1: [[0.0, 1.0]] * 3})
        s2 = scene_triple({1: [[0.0, 1.0]], 2: [[0.0], [1.0]]})
        stats = collect_statistics([s1, s2])
        assert category_instance_counts(stats) == {1: 4, 2: 2}

    def test_counts_match_bruteforce_recount(self, rng):
        triples = []
        expected: dict[int, int] = {}
        for _ in range(6):
            spec = {}
            for cat in rng.choice([1, 2, 3, 4], size=rng.integers(1, 4), replace=False):
                k = int(rng.integers(1, 4))
                spec[int(cat)] = [list(rng.uniform(0, 2, size=3)) for _ in range(k)]
            triples.append(scene_triple(spec))
        # independent recount straight from the fixtures
        for annos, _, _ in triples:
            for inst in annos.instances:
                expected[inst.category_id] = expected.get(inst.category_id, 0) + 1
        stats = collect_statistics(triples)
        assert category_instance_counts(stats) == dict(sorted(expected.items()))


class TestPercentages:
    def test_single_category_is_100(self):
        stats = collect_statistics([scene_triple({1: [[0.0, 1.0, 2.0]]})])
        assert category_point_percentages(stats) == {1: 100.0}

    def test_30_70_split(self):
        stats = collect_statistics(
            [scene_triple({1: [[0.0] * 30], 2: [[0.0] * 70]})]
        )
        pct = category_point_percentages(stats)
        assert pct[1] == pytest.approx(30.0)
        assert pct[2] == pytest.approx(70.0)

    def test_fully_labeled_sums_to_100(self, rng):
        spec = {int(c): [list(rng.uniform(0, 1, size=rng.integers(1, 9)))]
                for c in range(1, 6)}
        stats = collect_statistics([scene_triple(spec)])
        assert sum(category_point_percentages(stats).values()) == pytest.approx(
            100.0, abs=1e-9
        )

    def test_unlabeled_points_excluded(self):
        annos, points, labels = scene_triple({1: [[0.0, 1.0]]})
        points = np.vstack([points, [[9, 9, 9]]])
        labels = np.concatenate([labels, [-1]])
        stats = collect_statistics([(annos, points, labels)])
        assert stats.labeled_points == 2
        assert category_point_percentages(stats) == {1: 100.0}


class TestReports:
    def test_report_json_shape(self, rng):
        stats = collect_statistics([scene_triple({1: [[0.0, 1.7]], 4: [[0.2, 0.9]]})])
        import json

        doc = json.loads(write_report_json(stats))
        assert doc["totals"]["instances"] == 2
        assert doc["heights"]["1"]["max"] == pytest.approx(1.7)
        assert "trimmed_mean" in doc["heights"]["1"]

    def test_histogram_csv(self):
        stats = collect_statistics([scene_triple({1: [[0.0, 0.5], [0.0, 1.9]]})])
        hist = height_histogram(stats, 1, bin_width=1.0)
        text = write_histogram_csv(hist, 1).decode()
        lines = text.strip().splitlines()
        assert lines[0] == "category_id,bin_start_m,bin_end_m,count"
        assert len(lines) == 3

    def test_svg_written(self, tmp_path):
        from scenelift.stats import render_histogram_svg

        stats = collect_statistics([scene_triple({1: [[0.0, 0.5], [0.0, 1.2]]})])
        hist = height_histogram(stats, 1)
        out = tmp_path / "hist.svg"
        render_histogram_svg(hist, 1, out)
        assert out.read_bytes().lstrip().startswith(b"<?xml")
