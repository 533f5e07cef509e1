#!/usr/bin/env python3
"""Walkthrough: pinhole projection math and gravity-aligned rotations.

Shows the exact back-projection/projection round trip and how a single up
vector pins the camera-to-world rotation (up to the documented yaw
convention: forward goes to the +y half-plane).
"""

import numpy as np

from scenelift.camera import (
    Intrinsics,
    PixelCoord,
    camera_to_world,
    project_point,
    rotation_from_gravity,
    unproject_pixel,
)
from scenelift.errors import DegenerateGravityError
from scenelift.ingest import GravityPrediction

# --- back-projection and its inverse ----------------------------------------
K = Intrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0)
pixel = PixelCoord(u=400.0, v=180.0)
point = unproject_pixel(pixel, depth := 3.0, K)
print(f"pixel ({pixel.u}, {pixel.v}) at {depth} m -> camera point "
      f"({point.x:.4f}, {point.y:.4f}, {point.z:.4f})")

back, d = project_point(point, K)
print(f"projected back: ({back.u}, {back.v}) at {d} m  (round trip exact)")

# --- gravity: an upright photo ----------------------------------------------
# Camera frame: x right, y down, z forward.  In an upright photo the scene's
# up direction is -y.  The rotation maps it to world +z and the optical axis
# to world +y.
upright = rotation_from_gravity(GravityPrediction(up=np.array([0.0, -1.0, 0.0])))
print("\nupright camera:")
print("  R @ up      =", upright.rotation @ [0, -1, 0])
print("  R @ forward =", upright.rotation @ [0, 0, 1])

# --- gravity: a tilted camera ------------------------------------------------
tilt = np.deg2rad(25)
up_tilted = np.array([0.0, -np.cos(tilt), -np.sin(tilt)])  # pitched down 25 deg
tilted = rotation_from_gravity(GravityPrediction(up=up_tilted))
ahead = camera_to_world(unproject_pixel(PixelCoord(320, 240), 2.0, K), tilted)
print(f"\ncamera pitched down 25 deg, point 2 m along the axis lands at "
      f"({ahead.x:+.3f}, {ahead.y:+.3f}, {ahead.z:+.3f})")
print(f"  -> below the camera by {-ahead.z:.3f} m = 2 sin(25deg) = "
      f"{2 * np.sin(tilt):.3f} m")

# --- the degenerate case ------------------------------------------------------
# Looking straight up makes yaw unrecoverable from the forward axis; the
# batch pipeline falls back to pinning the image up axis and records it.
try:
    rotation_from_gravity(GravityPrediction(up=np.array([0.0, 0.0, 1.0])))
except DegenerateGravityError as e:
    print(f"\nstraight-up view raises DegenerateGravityError: {e}")
