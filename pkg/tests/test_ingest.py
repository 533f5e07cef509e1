"""Parser tests: COCO annotations, depth/RGB rasters, camera predictions."""

from __future__ import annotations

import json
import struct

import numpy as np
import pytest

from conftest import make_depth
from scenelift.errors import (
    ContractViolationError,
    MalformedJsonError,
    RasterFormatError,
)
from scenelift.ingest import (
    DepthKind,
    DepthMap,
    GravityPrediction,
    IntrinsicsPrediction,
    load_camera_prediction,
    load_depth_raster,
    load_rgb_raster,
    parse_coco_annotations,
    write_camera_prediction,
    write_depth_raster,
    write_rgb_raster,
)
from scenelift.masks import PolygonSet, RleMask, rasterize_polygons


def coco_doc(annotations, image_id=1, width=8, height=8) -> bytes:
    return json.dumps(
        {
            "images": [
                {"id": image_id, "width": width, "height": height, "file_name": "img.rgb"}
            ],
            "annotations": annotations,
        }
    ).encode("utf-8")


class TestParseCocoAnnotations:
    def test_zero_instances(self):
        result = parse_coco_annotations(coco_doc([]), 1)
        assert result.instances == ()
        assert (result.width, result.height) == (8, 8)

    def test_polygon_instance_rasterizes_to_area_16(self):
        doc = coco_doc(
            [
                {
                    "id": 7,
                    "image_id": 1,
                    "category_id": 3,
                    "segmentation": [[0, 0, 4, 0, 4, 4, 0, 4]],
                    "bbox": [0, 0, 4, 4],
                    "iscrowd": 0,
                }
            ]
        )
        result = parse_coco_annotations(doc, 1)
        (inst,) = result.instances
        assert isinstance(inst.segmentation, PolygonSet)
        mask = rasterize_polygons(inst.segmentation, 8, 8)
        assert mask.area == 16

    def test_bbox_clamped_to_image(self):
        doc = coco_doc([{"id": 1, "image_id": 1, "category_id": 1, "bbox": [6, 6, 4, 4]}])
        (inst,) = parse_coco_annotations(doc, 1).instances
        assert inst.bbox == (6.0, 6.0, 2.0, 2.0)

    def test_rle_instance(self):
        doc = coco_doc(
            [
                {
                    "id": 2,
                    "image_id": 1,
                    "category_id": 5,
                    "segmentation": {"counts": [0, 64], "size": [8, 8]},
                    "iscrowd": 1,
                }
            ]
        )
        (inst,) = parse_coco_annotations(doc, 1).instances
        assert isinstance(inst.segmentation, RleMask)
        assert inst.iscrowd

    def test_compressed_rle_string(self):
        from scenelift.masks import counts_to_rle_string

        doc = coco_doc(
            [
                {
                    "id": 2,
                    "image_id": 1,
                    "category_id": 5,
                    "segmentation": {
                        "counts": counts_to_rle_string([10, 3, 51]),
                        "size": [8, 8],
                    },
                }
            ]
        )
        (inst,) = parse_coco_annotations(doc, 1).instances
        assert inst.segmentation.counts == (10, 3, 51)

    def test_malformed_json_reports_offset(self):
        with pytest.raises(MalformedJsonError) as err:
            parse_coco_annotations(b'{"images": [', 1)
        assert err.value.offset is not None

    def test_unknown_category_is_not_an_error(self):
        doc = coco_doc([{"id": 1, "image_id": 1, "category_id": 99999, "bbox": [0, 0, 2, 2]}])
        (inst,) = parse_coco_annotations(doc, 1).instances
        assert inst.category_id == 99999

    def test_instance_without_geometry_skipped(self):
        doc = coco_doc([{"id": 1, "image_id": 1, "category_id": 2}])
        assert parse_coco_annotations(doc, 1).instances == ()

    def test_other_images_filtered_out(self):
        doc = json.dumps(
            {
                "images": [
                    {"id": 1, "width": 8, "height": 8},
                    {"id": 2, "width": 4, "height": 4},
                ],
                "annotations": [
                    {"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, 1, 1]},
                    {"id": 2, "image_id": 2, "category_id": 1, "bbox": [0, 0, 1, 1]},
                ],
            }
        ).encode()
        result = parse_coco_annotations(doc, 2)
        assert len(result.instances) == 1
        assert result.width == 4

    def test_unknown_image_id_raises(self):
        with pytest.raises(ContractViolationError):
            parse_coco_annotations(coco_doc([]), 42)

    def test_total_over_odd_but_wellformed_instances(self):
        # zero-size bbox, empty polygon list, negative bbox: parsed, not raised
        doc = coco_doc(
            [
                {"id": 1, "image_id": 1, "category_id": 1, "bbox": [3, 3, 0, 0]},
                {"id": 2, "image_id": 1, "category_id": 1, "segmentation": [], "bbox": [1, 1, 2, 2]},
                {"id": 3, "image_id": 1, "category_id": 1, "bbox": [-5, -5, 3, 3]},
            ]
        )
        result = parse_coco_annotations(doc, 1)
        assert len(result.instances) == 3
        assert result.instances[2].bbox == (0.0, 0.0, 0.0, 0.0)


class TestDepthRaster:
    def test_f32_identity_load(self):
        depth = make_depth([[1.0, 2.0], [3.0, 4.0]])
        data = write_depth_raster(depth, dtype="f32")
        loaded = load_depth_raster(data, DepthKind.METRIC)
        np.testing.assert_array_equal(loaded.values, [[1, 2], [3, 4]])
        assert loaded.kind is DepthKind.METRIC

    def test_u16_dequantization(self):
        # stored value 1000 at 0.001 m/unit -> 1.0 m
        depth = make_depth([[1.0]])
        data = write_depth_raster(depth, dtype="u16", scale=0.001)
        raw = np.frombuffer(data[21:], dtype="<u2")
        assert raw[0] == 1000
        loaded = load_depth_raster(data, DepthKind.METRIC)
        assert loaded.values[0, 0] == pytest.approx(1.0)

    def test_nan_pixel_flagged_invalid_others_loaded(self):
        depth = make_depth([[1.0, np.nan], [3.0, 4.0]])
        loaded = load_depth_raster(write_depth_raster(depth, dtype="f64"), DepthKind.RELATIVE)
        assert np.isnan(loaded.values[0, 1])
        assert loaded.finite_positive.sum() == 3

    def test_f64_round_trip_bit_exact(self, rng):
        values = rng.uniform(0.1, 50.0, size=(7, 5))
        depth = make_depth(values)
        loaded = load_depth_raster(write_depth_raster(depth, dtype="f64"), DepthKind.METRIC)
        np.testing.assert_array_equal(loaded.values, values)

    def test_negative_samples_marked_invalid(self):
        header = struct.pack("<4sIIBd", b"DPTH", 2, 1, 0, 1.0)
        payload = np.array([-1.0, 2.0], dtype="<f4").tobytes()
        loaded = load_depth_raster(header + payload, DepthKind.METRIC)
        assert np.isnan(loaded.values[0, 0])
        assert loaded.values[0, 1] == 2.0

    def test_dimension_mismatch_raises(self):
        header = struct.pack("<4sIIBd", b"DPTH", 3, 3, 0, 1.0)
        payload = np.zeros(4, dtype="<f4").tobytes()
        with pytest.raises(RasterFormatError):
            load_depth_raster(header + payload, DepthKind.METRIC)

    def test_bad_magic_raises(self):
        with pytest.raises(RasterFormatError):
            load_depth_raster(b"XXXX" + b"\0" * 30, DepthKind.METRIC)

    def test_depth_map_rejects_negative_values(self):
        with pytest.raises(ContractViolationError):
            DepthMap(width=1, height=1, values=np.array([[-2.0]]), kind=DepthKind.METRIC)


class TestRgbRaster:
    def test_round_trip(self, rng):
        rgb = rng.integers(0, 256, size=(6, 4, 3), dtype=np.uint8)
        loaded = load_rgb_raster(write_rgb_raster(rgb))
        np.testing.assert_array_equal(loaded, rgb)

    def test_wrong_shape_raises(self):
        with pytest.raises(ContractViolationError):
            write_rgb_raster(np.zeros((4, 4), dtype=np.uint8))


class TestCameraPrediction:
    def test_inline_up_vector(self, tmp_path):
        intr = IntrinsicsPrediction(
            focal_x=50.0, focal_y=52.0, principal_x=32.0, principal_y=30.0, width=64, height=60
        )
        path = tmp_path / "cam.json"
        write_camera_prediction(path, intr, up=[0.0, -1.0, 0.0], latitude=0.1)
        pred = load_camera_prediction(path)
        assert pred.intrinsics == intr
        np.testing.assert_allclose(pred.gravity.up, [0, -1, 0])
        assert pred.gravity.latitude == pytest.approx(0.1)

    def test_up_field_via_npy(self, tmp_path):
        intr = IntrinsicsPrediction(
            focal_x=50.0, focal_y=50.0, principal_x=2.0, principal_y=2.0, width=4, height=4
        )
        field = np.zeros((4, 4, 3))
        field[..., 1] = -1.0
        path = tmp_path / "cam.json"
        write_camera_prediction(path, intr, up_field=field)
        pred = load_camera_prediction(path)
        assert pred.gravity.up is None
        np.testing.assert_array_equal(pred.gravity.up_field, field)

    def test_non_unit_up_rejected(self):
        with pytest.raises(ContractViolationError):
            GravityPrediction(up=np.array([0.0, -2.0, 0.0]))

    def test_principal_point_outside_bounds_rejected(self):
        with pytest.raises(ContractViolationError):
            IntrinsicsPrediction(
                focal_x=10, focal_y=10, principal_x=99, principal_y=2, width=8, height=8
            )

    def test_nonpositive_focal_rejected(self):
        with pytest.raises(ContractViolationError):
            IntrinsicsPrediction(
                focal_x=0, focal_y=10, principal_x=2, principal_y=2, width=8, height=8
            )
