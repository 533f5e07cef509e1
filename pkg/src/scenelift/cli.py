"""Command line interface.

Subcommands:
    lift     run the batch pipeline over a config file
    stats    dataset statistics report (JSON + CSV + optional SVG histograms)
    verify   re-parse all outputs under a manifest and check invariants
    review   copy a seeded sample of Ok scenes for manual inspection
    oracle   generate synthetic fixtures / score a run against ground truth

Exit codes: 0 success, 1 partial (some scenes rejected / problems found),
2 fatal.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import SceneLiftError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_FATAL = 2


def _cmd_lift(args) -> int:
    from .pipeline import PipelineConfig, run_batch

    overrides = {}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.output is not None:
        overrides["output_root"] = Path(args.output)
    config = PipelineConfig.from_file(args.config, **overrides)
    manifest = run_batch(config, resume=args.resume)
    ok = len(manifest.ok_entries)
    rejected = len(manifest.rejected_entries)
    print(f"lifted {ok} scenes, rejected {rejected} "
          f"(manifest: {config.output_root / 'manifest.jsonl'})")
    for entry in manifest.rejected_entries:
        print(f"  rejected {entry.scene_id}: {entry.reason}")
    return EXIT_OK if rejected == 0 else EXIT_PARTIAL


def _cmd_stats(args) -> int:
    from .stats import (
        collect_statistics_from_manifest,
        height_histogram,
        render_histogram_svg,
        write_histogram_csv,
        write_report_json,
    )

    stats = collect_statistics_from_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_bytes(write_report_json(stats, bin_width=args.bin_width))
    for category_id in sorted(stats.per_category):
        hist = height_histogram(stats, category_id, bin_width=args.bin_width)
        if not hist.counts:
            continue
        (out_dir / f"heights_cat{category_id}.csv").write_bytes(
            write_histogram_csv(hist, category_id)
        )
        if args.svg:
            render_histogram_svg(hist, category_id, out_dir / f"heights_cat{category_id}.svg")
    print(f"report written to {out_dir / 'report.json'} "
          f"({stats.total_scenes} scenes, {stats.total_instances} instances)")
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .pipeline import verify_outputs

    problems = verify_outputs(Path(args.manifest))
    if problems:
        for p in problems:
            print(f"PROBLEM: {p}")
        print(f"{len(problems)} problem(s) found")
        return EXIT_PARTIAL
    print("all outputs re-parse and satisfy invariants")
    return EXIT_OK


def _cmd_review(args) -> int:
    from .output import read_manifest
    from .pipeline import PipelineConfig, sample_for_review

    manifest_path = Path(args.manifest)
    manifest = read_manifest(manifest_path.read_bytes())
    config = PipelineConfig.from_file(args.config)
    sampled = sample_for_review(
        manifest,
        config,
        n=args.n,
        seed=args.seed,
        review_dir=Path(args.out),
        output_root=manifest_path.parent,
    )
    print(f"sampled {len(sampled)} scene(s) into {args.out}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    import shutil
    import tempfile
    import time

    from .pipeline import PipelineConfig, run_batch

    worker_counts = [int(w) for w in args.workers.split(",")]
    print(f"benchmarking worker counts {worker_counts} ({args.repeat} run(s) each)")
    for workers in worker_counts:
        best = None
        scenes = 0
        for _ in range(args.repeat):
            out = Path(tempfile.mkdtemp(prefix="scenelift_bench_"))
            try:
                config = PipelineConfig.from_file(
                    args.config, output_root=out, workers=workers
                )
                start = time.monotonic()
                manifest = run_batch(config)
                elapsed = time.monotonic() - start
                scenes = len(manifest.entries)
                best = elapsed if best is None else min(best, elapsed)
            finally:
                shutil.rmtree(out, ignore_errors=True)
        rate = scenes / best if best else float("nan")
        print(f"  workers={workers}: {best:.3f} s for {scenes} scenes ({rate:.1f} scenes/s)")
    return EXIT_OK


def _cmd_oracle_gen(args) -> int:
    from .oracle import generate_fixture_set

    scene_ids = generate_fixture_set(
        Path(args.out),
        n_scenes=args.scenes,
        seed=args.seed,
        width=args.size,
        height=args.size,
        include_broken=args.include_broken,
    )
    print(f"generated {len(scene_ids)} fixture scene(s) under {args.out}")
    print(f"run them with: scenelift lift --config {Path(args.out) / 'config.json'}")
    return EXIT_OK


def _cmd_oracle_score(args) -> int:
    import numpy as np

    from .annolift import Box3D
    from .masks import decode_rle_mask
    from .output import read_annotations, read_manifest, read_point_cloud
    from .stats import object_height

    manifest_path = Path(args.manifest)
    manifest = read_manifest(manifest_path.read_bytes())
    root = manifest_path.parent
    truth_dir = Path(args.truth)
    report: dict = {"scenes": {}, "aggregate": {}}
    rmses, label_ious, box_ious, height_errs = [], [], [], []
    for entry in manifest.ok_entries:
        gt_npz = truth_dir / f"{entry.scene_id}.npz"
        gt_json = truth_dir / f"{entry.scene_id}.json"
        if not gt_npz.exists() or not gt_json.exists():
            report["scenes"][entry.scene_id] = {"error": "no ground truth"}
            continue
        gt = np.load(gt_npz)
        gt_doc = json.loads(gt_json.read_text("utf-8"))
        cloud = read_point_cloud((root / entry.files["cloud"]).read_bytes())
        anno_bytes = (root / entry.files["annotations"]).read_bytes()
        anno = read_annotations(anno_bytes)
        prov = json.loads(anno_bytes.decode("utf-8")).get("provenance", {})
        h, w = prov["grid"]
        valid = decode_rle_mask(prov["valid_rle"], w, h).bits
        rows, cols = np.nonzero(valid)

        gt_points = gt["points"]
        gt_hit = gt["hit_index"]
        matched = gt_hit[rows, cols] >= 0
        diff = cloud.points[matched] - gt_points[rows[matched], cols[matched]]
        rmse = float(np.sqrt(np.mean(np.sum(diff * diff, axis=1)))) if matched.any() else None
        scene_report = {"cloud_rmse": rmse, "instances": {}}
        if rmse is not None:
            rmses.append(rmse)

        gt_instances = {int(i["instance_id"]): i for i in gt_doc["instances"]}
        gt_prim_index = {
            int(i["instance_id"]): int(i["instance_id"]) - 1 for i in gt_doc["instances"]
        }
        for inst in anno.instances:
            gt_inst = gt_instances.get(inst.instance_id)
            if gt_inst is None:
                scene_report["instances"][str(inst.instance_id)] = {"error": "unmatched"}
                continue
            idx = inst.point_indices
            run_pixels = set(zip(rows[idx].tolist(), cols[idx].tolist()))
            gt_rows, gt_cols = np.nonzero(gt_hit == gt_prim_index[inst.instance_id])
            gt_pixels = set(zip(gt_rows.tolist(), gt_cols.tolist()))
            union = len(run_pixels | gt_pixels)
            iou = len(run_pixels & gt_pixels) / union if union else 0.0
            height_err = abs(object_height(cloud.points[idx]) - float(gt_inst["height"]))
            box_iou = None
            if inst.box is not None:
                gt_box = Box3D(
                    center=(np.array(gt_inst["box_min"]) + np.array(gt_inst["box_max"])) / 2,
                    extents=np.array(gt_inst["box_max"]) - np.array(gt_inst["box_min"]),
                    instance_id=inst.instance_id,
                    category_id=inst.category_id,
                )
                from .oracle import box_iou_3d

                box_iou = box_iou_3d(inst.box, gt_box)
                box_ious.append(box_iou)
            label_ious.append(iou)
            height_errs.append(height_err)
            scene_report["instances"][str(inst.instance_id)] = {
                "label_iou": iou,
                "box_iou": box_iou,
                "height_error": height_err,
            }
        report["scenes"][entry.scene_id] = scene_report

    report["aggregate"] = {
        "max_cloud_rmse": max(rmses) if rmses else None,
        "min_label_iou": min(label_ious) if label_ious else None,
        "min_box_iou": min(box_ious) if box_ious else None,
        "max_height_error": max(height_errs) if height_errs else None,
    }
    out = json.dumps(report, sort_keys=True, indent=1)
    if args.out:
        Path(args.out).write_text(out, "utf-8")
        print(f"score report written to {args.out}")
    else:
        print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scenelift", description=__doc__)
    parser.add_argument("--version", action="version", version=f"scenelift {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lift", help="run the batch pipeline")
    p.add_argument("--config", required=True, help="pipeline config JSON")
    p.add_argument("--workers", type=int, default=None, help="override worker count")
    p.add_argument("--output", default=None, help="override output root")
    p.add_argument("--resume", action="store_true", help="skip scenes already in the manifest")
    p.set_defaults(func=_cmd_lift)

    p = sub.add_parser("stats", help="dataset statistics report")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--bin-width", type=float, default=0.1, dest="bin_width")
    p.add_argument("--svg", action="store_true", help="also render SVG histograms")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("verify", help="re-parse outputs and check invariants")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("review", help="sample Ok scenes for manual inspection")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-n", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_review)

    p = sub.add_parser("bench", help="measure batch throughput per worker count")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", default="1,4", help="comma-separated worker counts")
    p.add_argument("--repeat", type=int, default=1)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("oracle", help="synthetic fixtures and scoring")
    oracle_sub = p.add_subparsers(dest="oracle_command", required=True)

    g = oracle_sub.add_parser("gen", help="emit a fixture set consumable by `lift`")
    g.add_argument("--out", required=True)
    g.add_argument("--scenes", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--size", type=int, default=64, help="image width and height")
    g.add_argument(
        "--include-broken", action="store_true", help="add scenes that must be rejected"
    )
    g.set_defaults(func=_cmd_oracle_gen)

    s = oracle_sub.add_parser("score", help="score a run against fixture ground truth")
    s.add_argument("--manifest", required=True)
    s.add_argument("--truth", required=True, help="fixture ground_truth directory")
    s.add_argument("--out", default=None, help="write the JSON report here")
    s.set_defaults(func=_cmd_oracle_score)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except SceneLiftError as e:
        print(f"fatal: {e}", file=sys.stderr)
        return EXIT_FATAL
    except OSError as e:
        print(f"fatal: {e}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
