"""Binary masks: COCO run-length codecs and polygon rasterization.

RLE follows the COCO convention: pixels are scanned column-major (down the
first column, then the second, ...) and counts alternate background /
foreground starting with background.  Both plain integer count lists and the
compact LEB128-style string encoding used for crowd annotations are
supported.

Rasterization fills a polygon with the even-odd rule, sampling at pixel
centers: pixel (row, col) is inside iff the point (col + 0.5, row + 0.5) is
inside.  Multiple polygons of one PolygonSet are merged with union, matching
how COCO merges the parts of a multi-polygon instance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import MalformedRleError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BitMask:
    """Row-major boolean raster of shape (height, width)."""

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self):
        if self.bits.shape != (self.height, self.width):
            raise ValueError(
                f"bits shape {self.bits.shape} != (height={self.height}, width={self.width})"
            )
        if self.bits.dtype != np.bool_:
            object.__setattr__(self, "bits", self.bits.astype(bool))

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.bits, other.bits))
        )


@dataclass(frozen=True)
class PolygonSet:
    """Polygons in pixel coordinates, each an (n, 2) array of (x, y) vertices."""

    polygons: tuple = field(default_factory=tuple)

    @classmethod
    def from_coco(cls, flat_lists) -> "PolygonSet":
        """Build from COCO-style flat [x0, y0, x1, y1, ...] lists."""
        polys = []
        for flat in flat_lists:
            arr = np.asarray(flat, dtype=np.float64).reshape(-1, 2)
            polys.append(arr)
        return cls(polygons=tuple(polys))

    def translated(self, dx: float, dy: float) -> "PolygonSet":
        return PolygonSet(tuple(p + np.array([dx, dy]) for p in self.polygons))


@dataclass(frozen=True)
class RleMask:
    """Undecoded run-length segmentation, as stored in COCO JSON."""

    counts: tuple
    width: int
    height: int


def decode_rle_mask(counts, width: int, height: int) -> BitMask:
    """Decode column-major RLE counts into a BitMask.

    Raises:
        MalformedRleError: counts are negative or do not sum to width*height.
    """
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts):
        raise MalformedRleError("negative run length")
    total = sum(counts)
    if total != width * height:
        raise MalformedRleError(
            f"runs sum to {total}, expected {width * height} for {width}x{height}"
        )
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for run in counts:
        if value and run:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    # Column-major scan: flat index k = col * height + row.
    bits = flat.reshape((width, height)).T.copy()
    return BitMask(width=width, height=height, bits=bits)


def encode_rle_mask(mask: BitMask) -> list[int]:
    """Encode a BitMask as column-major RLE counts (leading zero-run convention)."""
    flat = mask.bits.T.reshape(-1)
    if flat.size == 0:
        return []
    changes = np.flatnonzero(flat[1:] != flat[:-1])
    boundaries = np.concatenate(([0], changes + 1, [flat.size]))
    runs = np.diff(boundaries).tolist()
    if flat[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_string_to_counts(s: str) -> list[int]:
    """Decode COCO's compressed RLE string into integer counts.

    The encoding packs each count into 5-bit groups (LSB first), offset by 48
    into printable ASCII, with bit 0x20 as the continuation flag and sign
    extension from bit 0x10 of the final group.  From the third count on,
    values are deltas against the count two positions back.
    """
    counts: list[int] = []
    pos = 0
    n = len(s)
    while pos < n:
        x = 0
        k = 0
        more = True
        while more:
            if pos >= n:
                raise MalformedRleError("truncated RLE string")
            c = ord(s[pos]) - 48
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            pos += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        if x < 0:
            raise MalformedRleError("negative run length in RLE string")
        counts.append(x)
    return counts


def counts_to_rle_string(counts) -> str:
    """Encode integer counts into COCO's compressed RLE string."""
    counts = [int(c) for c in counts]
    chars: list[str] = []
    for i, cnt in enumerate(counts):
        x = cnt
        if i > 2:
            x -= counts[i - 2]
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = (x != -1) if (c & 0x10) else (x != 0)
            if more:
                c |= 0x20
            chars.append(chr(c + 48))
    return "".join(chars)


def rasterize_polygons(polygons: PolygonSet, width: int, height: int) -> BitMask:
    """Rasterize a PolygonSet onto a (height, width) grid.

    Each polygon is filled with the even-odd rule at pixel centers; the set is
    the union of its polygons.  Degenerate polygons (< 3 vertices) are skipped
    with a warning rather than failing the whole set.
    """
    bits = np.zeros((height, width), dtype=bool)
    xs = np.arange(width, dtype=np.float64) + 0.5
    ys = np.arange(height, dtype=np.float64) + 0.5
    grid_x, grid_y = np.meshgrid(xs, ys)
    for poly in polygons.polygons:
        poly = np.asarray(poly, dtype=np.float64)
        if poly.ndim != 2 or poly.shape[0] < 3:
            logger.warning("skipping degenerate polygon with %d vertices", poly.shape[0])
            continue
        bits |= _even_odd_fill(grid_x, grid_y, poly)
    return BitMask(width=width, height=height, bits=bits)


def _even_odd_fill(grid_x: np.ndarray, grid_y: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd (crossing number) point-in-polygon test over a pixel-center grid."""
    inside = np.zeros(grid_x.shape, dtype=bool)
    x0, y0 = poly[-1]
    for x1, y1 in poly:
        crosses = (y0 > grid_y) != (y1 > grid_y)
        if crosses.any():
            # Horizontal edges never satisfy `crosses`, so the division below
            # only matters where y1 != y0.
            with np.errstate(divide="ignore", invalid="ignore"):
                x_at = x0 + (grid_y - y0) * (x1 - x0) / (y1 - y0)
            inside ^= crosses & (grid_x < x_at)
        x0, y0 = x1, y1
    return inside
