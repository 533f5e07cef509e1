"""Validity masking and depth scale calibration.

A pixel is valid iff it is finite and strictly positive in both the relative
and the metric map, outside the configured edge margin, and not flagged as a
metric-depth outlier.  The scale factor is the ratio of the valid-set mean
metric depth to the valid-set mean relative depth, and the calibrated map is
the relative map multiplied by that single global factor.

Reasons are recorded per pixel with precedence
NonFinite > NonPositive > EdgeMargin > Outlier; `valid` is exactly the set
of pixels whose reason is Ok.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import (
    ContractViolationError,
    DegenerateRelativeDepthError,
    InsufficientValidPointsError,
)
from .ingest import DepthKind, DepthMap


class Reason(IntEnum):
    OK = 0
    NON_FINITE = 1
    NON_POSITIVE = 2
    EDGE_MARGIN = 3
    OUTLIER = 4


@dataclass(frozen=True)
class FilterPolicy:
    """Invalid-point filtering knobs, part of the pipeline config file."""

    edge_margin_px: int = 2
    outlier_k: float = 3.0
    outlier_enabled: bool = True
    min_valid_points: int = 16

    def __post_init__(self):
        if self.edge_margin_px < 0:
            raise ContractViolationError("edge_margin_px must be >= 0")
        if self.outlier_k <= 0:
            raise ContractViolationError("outlier_k must be > 0")
        if self.min_valid_points < 1:
            raise ContractViolationError("min_valid_points must be >= 1")


@dataclass(frozen=True)
class ValidityMask:
    width: int
    height: int
    reasons: np.ndarray  # (height, width) uint8 of Reason values

    def __post_init__(self):
        if self.reasons.shape != (self.height, self.width):
            raise ContractViolationError("reasons raster shape mismatch")

    @property
    def valid(self) -> np.ndarray:
        return self.reasons == Reason.OK

    @property
    def valid_count(self) -> int:
        return int(np.count_nonzero(self.reasons == Reason.OK))


@dataclass(frozen=True)
class ScaleFactor:
    """Meters per relative-depth unit, with the means that produced it."""

    s: float
    valid_count: int
    mean_metric: float
    mean_relative: float


@dataclass(frozen=True)
class CalibratedDepthMap:
    """Relative depth scaled to meters; invalid pixels carry NaN."""

    width: int
    height: int
    values: np.ndarray
    mask: ValidityMask
    source_scale: ScaleFactor


def compute_validity_mask(d_r: DepthMap, d_m: DepthMap, policy: FilterPolicy) -> ValidityMask:
    """Partition pixels into valid/invalid with per-pixel reasons.

    Outliers are pixels whose metric depth falls outside
    [Q1 - k*IQR, Q3 + k*IQR] of the metric depths that survived the earlier
    checks; the quartiles are computed over that candidate set.

    Raises:
        ContractViolationError: the two maps differ in dimensions.
    """
    if (d_r.width, d_r.height) != (d_m.width, d_m.height):
        raise ContractViolationError(
            f"dimension mismatch: relative {d_r.width}x{d_r.height} "
            f"vs metric {d_m.width}x{d_m.height}"
        )
    h, w = d_r.height, d_r.width
    reasons = np.zeros((h, w), dtype=np.uint8)

    finite = np.isfinite(d_r.values) & np.isfinite(d_m.values)
    reasons[~finite] = Reason.NON_FINITE

    with np.errstate(invalid="ignore"):
        nonpos = finite & ((d_r.values <= 0) | (d_m.values <= 0))
    reasons[nonpos] = Reason.NON_POSITIVE

    margin = policy.edge_margin_px
    if margin > 0:
        edge = np.ones((h, w), dtype=bool)
        if h > 2 * margin and w > 2 * margin:
            edge[margin : h - margin, margin : w - margin] = False
        reasons[edge & (reasons == Reason.OK)] = Reason.EDGE_MARGIN

    if policy.outlier_enabled:
        candidates = reasons == Reason.OK
        metric = d_m.values[candidates]
        # IQR needs a few samples to mean anything.
        if metric.size >= 4:
            q1, q3 = np.percentile(metric, [25.0, 75.0])
            iqr = q3 - q1
            lo = q1 - policy.outlier_k * iqr
            hi = q3 + policy.outlier_k * iqr
            with np.errstate(invalid="ignore"):
                out = candidates & ((d_m.values < lo) | (d_m.values > hi))
            reasons[out] = Reason.OUTLIER

    return ValidityMask(width=w, height=h, reasons=reasons)


def compute_scale_factor(
    d_r: DepthMap,
    d_m: DepthMap,
    mask: ValidityMask,
    min_valid_points: int = 16,
) -> ScaleFactor:
    """Ratio of valid-set mean metric depth to valid-set mean relative depth.

    Sums run in float64 (numpy pairwise summation).

    Raises:
        InsufficientValidPointsError: fewer valid pixels than the minimum.
        DegenerateRelativeDepthError: mean valid relative depth is <= 0.
    """
    if (mask.width, mask.height) != (d_r.width, d_r.height):
        raise ContractViolationError("mask dimensions do not match depth maps")
    valid = mask.valid
    n = int(np.count_nonzero(valid))
    if n < min_valid_points:
        raise InsufficientValidPointsError(f"{n} valid pixels < minimum {min_valid_points}")
    mean_metric = float(d_m.values[valid].mean())
    mean_relative = float(d_r.values[valid].mean())
    if not (mean_relative > 0 and np.isfinite(mean_relative)):
        raise DegenerateRelativeDepthError(f"mean relative depth {mean_relative} is not positive")
    s = mean_metric / mean_relative
    if not (s > 0 and np.isfinite(s)):
        raise DegenerateRelativeDepthError(f"scale factor {s} is not positive and finite")
    return ScaleFactor(s=s, valid_count=n, mean_metric=mean_metric, mean_relative=mean_relative)


def calibrate_depth(d_r: DepthMap, scale: ScaleFactor, mask: ValidityMask) -> CalibratedDepthMap:
    """Scale the relative map to meters on the valid set; invalid pixels get NaN."""
    if not (np.isfinite(scale.s) and scale.s > 0):
        raise ContractViolationError(f"scale factor {scale.s} must be finite and > 0")
    if (mask.width, mask.height) != (d_r.width, d_r.height):
        raise ContractViolationError("mask dimensions do not match depth map")
    values = np.where(mask.valid, scale.s * d_r.values, np.nan)
    return CalibratedDepthMap(
        width=d_r.width, height=d_r.height, values=values, mask=mask, source_scale=scale
    )


def as_metric_depth_map(calibrated: CalibratedDepthMap) -> DepthMap:
    """View a calibrated map as a plain metric DepthMap."""
    return DepthMap(
        width=calibrated.width,
        height=calibrated.height,
        values=calibrated.values,
        kind=DepthKind.METRIC,
    )
