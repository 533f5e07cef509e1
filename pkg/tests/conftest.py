"""Shared helpers: reference implementations used as independent oracles.

The reference codecs here are deliberately naive (per-pixel python loops,
half-plane sign tests) so they share no code path with the library routines
they check.
"""

from __future__ import annotations

import numpy as np
import pytest

from scenelift.ingest import DepthKind, DepthMap


def make_depth(values, kind=DepthKind.METRIC) -> DepthMap:
    arr = np.asarray(values, dtype=np.float64)
    return DepthMap(width=arr.shape[1], height=arr.shape[0], values=arr, kind=kind)


def reference_rle_decode(counts, width: int, height: int) -> np.ndarray:
    """Naive per-pixel RLE decoder: expand runs, then index column-major."""
    flat = []
    value = False
    for run in counts:
        flat.extend([value] * run)
        value = not value
    assert len(flat) == width * height
    out = np.zeros((height, width), dtype=bool)
    for x in range(width):
        for y in range(height):
            out[y, x] = flat[x * height + y]
    return out


def reference_rle_encode(bits: np.ndarray) -> list[int]:
    """Naive per-pixel RLE encoder: walk pixels column-major and count runs."""
    height, width = bits.shape
    counts = []
    current = False
    run = 0
    for x in range(width):
        for y in range(height):
            v = bool(bits[y, x])
            if v == current:
                run += 1
            else:
                counts.append(run)
                current = v
                run = 1
    counts.append(run)
    return counts


def convex_polygon_oracle(poly: np.ndarray, width: int, height: int) -> np.ndarray:
    """Per-pixel inside test for convex polygons via half-plane signs.

    Independent of the library's crossing-number rasterizer.  Boundary
    pixels (center exactly on an edge) may legitimately differ.
    """
    poly = np.asarray(poly, dtype=np.float64)
    n = len(poly)
    xs = np.arange(width) + 0.5
    ys = np.arange(height) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    # orientation sign of the polygon
    area2 = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        area2 += x0 * y1 - x1 * y0
    sign = 1.0 if area2 > 0 else -1.0
    inside = np.ones((height, width), dtype=bool)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        cross = (x1 - x0) * (gy - y0) - (y1 - y0) * (gx - x0)
        inside &= sign * cross > 0
    return inside


def random_convex_polygon(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    """Random convex polygon: hull-ordered points on an ellipse with jitter."""
    n = int(rng.integers(3, 9))
    cx = rng.uniform(width * 0.25, width * 0.75)
    cy = rng.uniform(height * 0.25, height * 0.75)
    rx = rng.uniform(width * 0.1, width * 0.45)
    ry = rng.uniform(height * 0.1, height * 0.45)
    angles = np.sort(rng.uniform(0, 2 * np.pi, size=n))
    # enforce distinct angles for a clean convex ordering
    if np.any(np.diff(angles) < 1e-3):
        angles = np.linspace(0, 2 * np.pi, n, endpoint=False) + rng.uniform(0, 0.3)
    xs = cx + rx * np.cos(angles)
    ys = cy + ry * np.sin(angles)
    return np.column_stack([xs, ys])


def boundary_pixels(bits: np.ndarray) -> np.ndarray:
    """Pixels whose 3x3 neighborhood mixes inside and outside."""
    padded = np.pad(bits, 1, mode="edge")
    out = np.zeros_like(bits)
    h, w = bits.shape
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            neighbor = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
            out |= neighbor != bits
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


# --- acceptance reporting -------------------------------------------------
# Each test in test_acceptance.py carries @pytest.mark.criterion(n, desc);
# the summary hook prints one PASS/FAIL line per criterion after the run.

_criterion_results: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(n, description): acceptance criterion metadata"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, description = marker.args
    _criterion_results[n] = (description, report.passed)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criterion_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for n in sorted(_criterion_results):
        description, passed = _criterion_results[n]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status} - {description}")
