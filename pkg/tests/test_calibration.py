"""Calibration tests: validity masking, the scale factor, calibrated depth.

The scale factor is mean(valid metric) / mean(valid relative); every derived
expectation below is either hand-computable from tiny inputs or an algebraic
identity of that ratio (homogeneity, mean consistency, scale recovery).
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_depth
from scenelift.calibration import (
    FilterPolicy,
    Reason,
    calibrate_depth,
    compute_scale_factor,
    compute_validity_mask,
)
from scenelift.errors import (
    ContractViolationError,
    DegenerateRelativeDepthError,
    InsufficientValidPointsError,
)
from scenelift.ingest import DepthKind

NO_FILTER = FilterPolicy(edge_margin_px=0, outlier_enabled=False, min_valid_points=1)


class TestComputeValidityMask:
    def test_all_positive_finite_all_ok(self):
        d = make_depth(np.ones((4, 4)))
        mask = compute_validity_mask(d, d, NO_FILTER)
        assert mask.valid.all()
        assert (mask.reasons == Reason.OK).all()

    def test_nan_in_metric_flags_that_pixel_only(self):
        values = np.ones((2, 4))
        metric = values.copy()
        metric[1, 1] = np.nan  # pixel index 5 row-major
        mask = compute_validity_mask(make_depth(values), make_depth(metric), NO_FILTER)
        assert mask.reasons[1, 1] == Reason.NON_FINITE
        assert mask.valid.sum() == 7

    def test_edge_margin_2_on_10x10_leaves_inner_6x6(self):
        # enumeration oracle: pixels with 2 <= row,col <= 7 -> 36
        expected = sum(
            1
            for r in range(10)
            for c in range(10)
            if 2 <= r <= 7 and 2 <= c <= 7
        )
        assert expected == 36
        d = make_depth(np.ones((10, 10)))
        policy = FilterPolicy(edge_margin_px=2, outlier_enabled=False)
        mask = compute_validity_mask(d, d, policy)
        assert mask.valid_count == 36
        assert mask.valid[2:8, 2:8].all()

    def test_nonpositive_flagged(self):
        rel = make_depth([[1.0, 0.0], [2.0, 3.0]])
        met = make_depth([[1.0, 1.0], [2.0, 3.0]])
        mask = compute_validity_mask(rel, met, NO_FILTER)
        assert mask.reasons[0, 1] == Reason.NON_POSITIVE
        assert mask.valid.sum() == 3

    def test_precedence_nonfinite_beats_edge(self):
        values = np.ones((6, 6))
        metric = values.copy()
        metric[0, 0] = np.nan
        policy = FilterPolicy(edge_margin_px=1, outlier_enabled=False)
        mask = compute_validity_mask(make_depth(values), make_depth(metric), policy)
        assert mask.reasons[0, 0] == Reason.NON_FINITE
        assert mask.reasons[0, 1] == Reason.EDGE_MARGIN

    def test_outlier_iqr_rule(self):
        # 99 pixels near 5 m and one at 500 m: the spike is the only outlier
        values = np.full((10, 10), 5.0)
        values += np.linspace(0, 0.5, 100).reshape(10, 10)
        metric = values.copy()
        metric[5, 5] = 500.0
        policy = FilterPolicy(edge_margin_px=0, outlier_enabled=True, outlier_k=3.0)
        mask = compute_validity_mask(make_depth(values), make_depth(metric), policy)
        assert mask.reasons[5, 5] == Reason.OUTLIER
        assert mask.valid.sum() == 99

    def test_outlier_filter_disabled(self):
        values = np.full((10, 10), 5.0)
        metric = values.copy()
        metric[5, 5] = 500.0
        mask = compute_validity_mask(make_depth(values), make_depth(metric), NO_FILTER)
        assert mask.valid.all()

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ContractViolationError):
            compute_validity_mask(
                make_depth(np.ones((2, 2))), make_depth(np.ones((3, 3))), NO_FILTER
            )

    def test_partition_is_total(self, rng):
        values = rng.uniform(0.5, 10, size=(12, 9))
        noisy = values.copy()
        noisy[rng.random((12, 9)) < 0.2] = np.nan
        policy = FilterPolicy(edge_margin_px=1, outlier_enabled=True)
        mask = compute_validity_mask(make_depth(values), make_depth(noisy), policy)
        n_valid = mask.valid.sum()
        n_invalid = (~mask.valid).sum()
        assert n_valid + n_invalid == 12 * 9
        np.testing.assert_array_equal(mask.valid, mask.reasons == Reason.OK)


class TestComputeScaleFactor:
    def test_identity_when_maps_equal(self):
        d = make_depth(np.full((5, 5), 3.7))
        mask = compute_validity_mask(d, d, NO_FILTER)
        scale = compute_scale_factor(d, d, mask, min_valid_points=1)
        assert scale.s == 1.0
        assert scale.valid_count == 25

    def test_hand_computed_ratio_of_means(self):
        # valid metric [2, 4, 6] -> mean 4; valid relative [1, 2, 3] -> mean 2
        rel = make_depth([[1.0, 2.0, 3.0]], kind=DepthKind.RELATIVE)
        met = make_depth([[2.0, 4.0, 6.0]])
        mask = compute_validity_mask(rel, met, NO_FILTER)
        scale = compute_scale_factor(rel, met, mask, min_valid_points=1)
        assert scale.s == pytest.approx(2.0, rel=1e-15)
        assert scale.mean_metric == pytest.approx(4.0)
        assert scale.mean_relative == pytest.approx(2.0)

    def test_too_few_valid_points(self):
        d = make_depth(np.ones((3, 3)))
        mask = compute_validity_mask(d, d, NO_FILTER)
        with pytest.raises(InsufficientValidPointsError):
            compute_scale_factor(d, d, mask, min_valid_points=16)

    def test_degenerate_relative_depth(self):
        # relative map that is positive-but-tiny everywhere still works;
        # degeneracy needs a non-positive mean, only reachable through a
        # crafted mask that keeps zero pixels valid
        rel = make_depth(np.zeros((4, 4)) + 0.0, kind=DepthKind.RELATIVE)
        met = make_depth(np.ones((4, 4)))
        mask = compute_validity_mask(met, met, NO_FILTER)  # everything "valid"
        with pytest.raises(DegenerateRelativeDepthError):
            compute_scale_factor(rel, met, mask, min_valid_points=1)

    @given(st.floats(min_value=1e-3, max_value=1e3))
    @settings(max_examples=40, deadline=None)
    def test_homogeneity_in_relative_depth(self, c):
        # s(c * d_r, d_m) == s(d_r, d_m) / c within 1e-12 relative
        base = np.linspace(1.0, 9.0, 16).reshape(4, 4)
        rel = make_depth(base, kind=DepthKind.RELATIVE)
        scaled = make_depth(c * base, kind=DepthKind.RELATIVE)
        met = make_depth(np.linspace(2.0, 5.0, 16).reshape(4, 4))
        mask = compute_validity_mask(rel, met, NO_FILTER)
        s0 = compute_scale_factor(rel, met, mask, min_valid_points=1).s
        s1 = compute_scale_factor(scaled, met, mask, min_valid_points=1).s
        assert s1 == pytest.approx(s0 / c, rel=1e-12)


class TestCalibrateDepth:
    def test_unit_scale_is_identity_on_valid(self):
        rel = make_depth(np.linspace(1, 4, 4).reshape(2, 2), kind=DepthKind.RELATIVE)
        mask = compute_validity_mask(rel, rel, NO_FILTER)
        scale = compute_scale_factor(rel, rel, mask, min_valid_points=1)
        out = calibrate_depth(rel, scale, mask)
        np.testing.assert_array_equal(out.values, rel.values)

    def test_arithmetic(self):
        rel = make_depth([[3.5]], kind=DepthKind.RELATIVE)
        met = make_depth([[7.0]])
        mask = compute_validity_mask(rel, met, NO_FILTER)
        scale = compute_scale_factor(rel, met, mask, min_valid_points=1)
        out = calibrate_depth(rel, scale, mask)
        assert scale.s == pytest.approx(2.0)
        assert out.values[0, 0] == pytest.approx(7.0)

    def test_invalid_pixels_carry_nan_and_mask_is_conserved(self):
        values = np.linspace(1, 9, 9).reshape(3, 3)
        noisy = values.copy()
        noisy[0, 0] = np.nan
        rel = make_depth(noisy, kind=DepthKind.RELATIVE)
        met = make_depth(values)
        mask = compute_validity_mask(rel, met, NO_FILTER)
        scale = compute_scale_factor(rel, met, mask, min_valid_points=1)
        out = calibrate_depth(rel, scale, mask)
        assert np.isnan(out.values[0, 0])
        np.testing.assert_array_equal(out.mask.valid, mask.valid)

    def test_scale_recovery_against_true_depth(self, rng):
        # d_r = alpha * d_true (exact), d_m = d_true -> calibrated == d_true
        d_true = rng.uniform(0.5, 30.0, size=(16, 16))
        alpha = 0.037
        rel = make_depth(alpha * d_true, kind=DepthKind.RELATIVE)
        met = make_depth(d_true)
        mask = compute_validity_mask(rel, met, NO_FILTER)
        scale = compute_scale_factor(rel, met, mask)
        out = calibrate_depth(rel, scale, mask)
        np.testing.assert_allclose(out.values, d_true, rtol=1e-9)

    def test_mean_consistency(self, rng):
        # mean of calibrated depth over valid == mean of metric over valid
        for _ in range(20):
            rel_values = rng.uniform(0.1, 5.0, size=(8, 8))
            met_values = rng.uniform(0.5, 20.0, size=(8, 8))
            rel = make_depth(rel_values, kind=DepthKind.RELATIVE)
            met = make_depth(met_values)
            mask = compute_validity_mask(rel, met, NO_FILTER)
            scale = compute_scale_factor(rel, met, mask)
            out = calibrate_depth(rel, scale, mask)
            lhs = out.values[mask.valid].mean()
            rhs = met.values[mask.valid].mean()
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_rejects_nonpositive_scale(self):
        from scenelift.calibration import ScaleFactor

        rel = make_depth([[1.0]], kind=DepthKind.RELATIVE)
        mask = compute_validity_mask(rel, rel, NO_FILTER)
        bad = ScaleFactor(s=-1.0, valid_count=1, mean_metric=1.0, mean_relative=1.0)
        with pytest.raises(ContractViolationError):
            calibrate_depth(rel, bad, mask)
