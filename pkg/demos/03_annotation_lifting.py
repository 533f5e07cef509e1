#!/usr/bin/env python3
"""Walkthrough: carrying 2D annotations into 3D.

A small COCO-style document with one polygon instance and one bbox-only
instance is parsed, the scene is lifted, mask pixels become labeled points,
and each instance gets a world-axis-aligned 3D box from the depth extremes
inside its region.
"""

import json

import numpy as np

from scenelift.annolift import build_scene_annotations
from scenelift.calibration import (
    FilterPolicy,
    calibrate_depth,
    compute_scale_factor,
    compute_validity_mask,
)
from scenelift.camera import Intrinsics, lift_depth_map, rotation_from_gravity
from scenelift.ingest import DepthKind, DepthMap, GravityPrediction, parse_coco_annotations

# --- a 32x32 scene: near box of depth 2 m on a 6 m backdrop -------------------
h = w = 32
depth = np.full((h, w), 6.0)
depth[8:20, 10:22] = 2.0

d = DepthMap(width=w, height=h, values=depth, kind=DepthKind.RELATIVE)
policy = FilterPolicy(edge_margin_px=0, outlier_enabled=False)
mask = compute_validity_mask(d, d, policy)
calibrated = calibrate_depth(d, compute_scale_factor(d, d, mask), mask)

K = Intrinsics(fx=32, fy=32, cx=16, cy=16)
extrinsics = rotation_from_gravity(GravityPrediction(up=np.array([0.0, -1.0, 0.0])))
scene = lift_depth_map(calibrated, K, extrinsics, np.zeros((h, w, 3), np.uint8))

# --- COCO annotations: a polygon mask and a bare bbox -------------------------
doc = {
    "images": [{"id": 1, "width": w, "height": h, "file_name": "demo.rgb"}],
    "annotations": [
        {
            "id": 1,
            "image_id": 1,
            "category_id": 44,  # the near box, outlined as a polygon
            "segmentation": [[10, 8, 22, 8, 22, 20, 10, 20]],
            "bbox": [10, 8, 12, 12],
            "iscrowd": 0,
        },
        {
            "id": 2,
            "image_id": 1,
            "category_id": 7,  # a backdrop region with box-only annotation
            "bbox": [2, 24, 10, 6],
            "iscrowd": 0,
        },
    ],
}
set2d = parse_coco_annotations(json.dumps(doc).encode(), image_id=1)
annotations = build_scene_annotations(set2d, scene, calibrated, K, extrinsics, scene_id="demo")

for inst in annotations.instances:
    pts = scene.points[inst.point_indices]
    print(f"instance {inst.instance_id} (category {inst.category_id}):")
    print(f"  points: {inst.point_indices.size}")
    print(f"  box center  ({inst.box.center[0]:+.3f}, {inst.box.center[1]:+.3f}, "
          f"{inst.box.center[2]:+.3f}) m")
    print(f"  box extents ({inst.box.extents[0]:.3f}, {inst.box.extents[1]:.3f}, "
          f"{inst.box.extents[2]:.3f}) m")
    print(f"  all points inside the box: {bool(inst.box.contains(pts).all())}")

labeled = scene.semantic_labels >= 0
print(f"\nlabeled points: {labeled.sum()} of {scene.point_count} "
      f"(bbox-only instances keep their point list but label nothing)")
