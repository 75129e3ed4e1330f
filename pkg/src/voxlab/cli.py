"""Command-line interface.

Subcommands: ``generate`` (manifest -> per-frame label grids), ``fuse-masks``
(detection sets -> semantic masks), ``eval`` (grids -> report + figures),
``synth`` (synthetic sequence writer), and ``export-ply``.

Options can also come from a JSON config file: file values override built-in
defaults, command-line flags override the file.  Exit codes: 0 success,
1 validation error, 2 I/O or format error, 3 internal invariant violation.
"""

from __future__ import annotations

import json
import re
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from voxlab import formats, pipeline, report as report_mod, synth
from voxlab.errors import FormatError, InternalError, ValidationError
from voxlab.masks import filter_detections, fuse_masks
from voxlab.metrics import (
    IoUCounts, RayIoUCounts, iou_counts, ray_iou_counts, ray_profile,
    ray_scores_from_counts, report_from_counts,
)
from voxlab.scene import (
    CameraModel, ClassTable, GridSpec, default_class_table, invert_pose, load_manifest,
)

_GRID_RE = re.compile(r"^(?P<o>[-\d.,]+):(?P<res>[\d.]+):(?P<d>[\d,]+)$")


def _parse_grid(text: str) -> GridSpec:
    m = _GRID_RE.match(text)
    if not m:
        raise ValidationError(
            f"bad grid spec {text!r}; expected 'ox,oy,oz:resolution:nx,ny,nz'"
        )
    origin = [float(x) for x in m.group("o").split(",")]
    dims = [int(x) for x in m.group("d").split(",")]
    if len(origin) != 3 or len(dims) != 3:
        raise ValidationError(f"bad grid spec {text!r}: need 3 origin and 3 dim values")
    return GridSpec(np.array(origin), float(m.group("res")), tuple(dims))


def _load_classes(path: str | None) -> ClassTable:
    if path is None:
        return default_class_table()
    with open(path) as fh:
        return ClassTable.from_json(json.load(fh))


def _build_config(config_path, **flags) -> pipeline.PipelineConfig:
    cfg = pipeline.PipelineConfig()
    if config_path:
        with open(config_path) as fh:
            cfg = pipeline.config_from_dict(json.load(fh), cfg)
    overrides = {k: v for k, v in flags.items() if v is not None}
    if "grid" in overrides:
        overrides["grid"] = _parse_grid(overrides["grid"])
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def _run(fn) -> None:
    try:
        fn()
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except (FormatError, OSError) as exc:
        click.echo(f"i/o error: {exc}", err=True)
        sys.exit(2)
    except (InternalError, AssertionError) as exc:
        click.echo(f"internal error: {exc}", err=True)
        sys.exit(3)


@click.group()
def main() -> None:
    """Voxel pseudo-label generation and evaluation."""


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), help="JSON config file.")
@click.option("--mode", type=click.Choice(pipeline.MODES), default=None)
@click.option("--grid", default=None, help="Grid as 'ox,oy,oz:resolution:nx,ny,nz'.")
@click.option("--logit-threshold", type=float, default=None)
@click.option("--min-points", type=int, default=None)
@click.option("--point-stride", type=int, default=None)
@click.option("--visibility-stride", type=int, default=None)
@click.option("--filters/--no-filters", "filters_enabled", default=None)
@click.option("--workers", type=int, default=None)
@click.option("--classes", "classes_path", type=click.Path(exists=True), default=None)
@click.option("--dump-cellstats", "cellstats_path", type=click.Path(), default=None)
def generate(manifest_path, out_dir, config_path, mode, grid, logit_threshold, min_points,
             point_stride, visibility_stride, filters_enabled, workers, classes_path,
             cellstats_path) -> None:
    """Run the label-generation pipeline over a sequence manifest."""

    def go():
        cfg = _build_config(
            config_path, mode=mode, grid=grid, logit_threshold=logit_threshold,
            min_points=min_points, point_stride=point_stride,
            visibility_stride=visibility_stride, filters_enabled=filters_enabled,
            workers=workers,
        )
        classes = _load_classes(classes_path)
        manifest = load_manifest(manifest_path)
        results = pipeline.run_pipeline(
            manifest, cfg, classes, out_dir=Path(out_dir),
            cell_stats_path=Path(cellstats_path) if cellstats_path else None,
        )
        click.echo(f"wrote {len(results)} frame grids to {out_dir}")

    _run(go)


@main.command("fuse-masks")
@click.option("--detections", "det_dir", required=True, type=click.Path(exists=True),
              help="Directory of .vxdt detection set files.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--threshold", type=float, default=0.2, show_default=True)
@click.option("--classes", "classes_path", type=click.Path(exists=True), default=None)
def fuse_masks_cmd(det_dir, out_dir, threshold, classes_path) -> None:
    """Fuse per-class detection masks into dense semantic masks."""

    def go():
        classes = _load_classes(classes_path)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = sorted(Path(det_dir).glob("*.vxdt"))
        if not files:
            raise ValidationError(f"no .vxdt files under {det_dir}")
        for path in files:
            dets, width, height = formats.read_detections(path)
            fused = fuse_masks(filter_detections(dets, threshold), (height, width), classes)
            formats.write_semantic_mask(out / (path.stem + ".vxsm"), fused)
        click.echo(f"fused {len(files)} detection sets into {out_dir}")

    _run(go)


def _frame_index(path: Path) -> int:
    m = re.search(r"(\d+)", path.stem)
    if not m:
        raise ValidationError(f"cannot infer frame index from {path.name}")
    return int(m.group(1))


@main.command("eval")
@click.option("--pred", "pred_dir", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_dir", required=True, type=click.Path(exists=True))
@click.option("--report-dir", required=True, type=click.Path())
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), default=None,
              help="Needed for ray-based metrics (camera rays).")
@click.option("--ray-stride", type=int, default=4, show_default=True)
@click.option("--thresholds", default="1,2,4", show_default=True)
@click.option("--figures/--no-figures", default=True)
@click.option("--classes", "classes_path", type=click.Path(exists=True), default=None)
def eval_cmd(pred_dir, gt_dir, report_dir, manifest_path, ray_stride, thresholds,
             figures, classes_path) -> None:
    """Compare predicted grids against ground-truth grids."""

    def go():
        classes = _load_classes(classes_path)
        taus = tuple(float(t) for t in thresholds.split(","))
        preds = {_frame_index(p): p for p in sorted(Path(pred_dir).glob("*.vxgr"))}
        gts = {_frame_index(p): p for p in sorted(Path(gt_dir).glob("*.vxgr"))}
        common = sorted(set(preds) & set(gts))
        if not common:
            raise ValidationError("no frame files with matching indices in pred/gt dirs")
        manifest = load_manifest(manifest_path, check_files=False) if manifest_path else None

        total: IoUCounts | None = None
        ray_total: RayIoUCounts | None = None
        for t in common:
            pred, vis = formats.read_grid(preds[t])
            gt, _ = formats.read_grid(gts[t])
            if vis is None:
                raise ValidationError(f"{preds[t]}: prediction file carries no visibility plane")
            counts = iou_counts(pred, gt, vis, classes)
            if total is None:
                total = counts
            else:
                total.merge(counts)
            if manifest is not None and t < len(manifest.frames):
                frame = manifest.frames[t]
                world_to_ego = invert_pose(frame.pose.ego_to_world)
                origins, dirs = [], []
                for rec in frame.cameras:
                    cam = rec.camera
                    ego_cam = CameraModel(
                        intrinsics=cam.intrinsics,
                        cam_to_world=world_to_ego @ cam.cam_to_world,
                        width=cam.width, height=cam.height,
                    )
                    u, v = ego_cam.pixel_grid(ray_stride)
                    d = ego_cam.pixel_directions(u, v)
                    origins.append(np.broadcast_to(ego_cam.center, d.shape))
                    dirs.append(d)
                o = np.concatenate(origins)
                d = np.concatenate(dirs)
                rc = ray_iou_counts(
                    ray_profile(pred, o, d, classes),
                    ray_profile(gt, o, d, classes),
                    taus, len(classes),
                )
                if ray_total is None:
                    ray_total = rc
                else:
                    ray_total.merge(rc)

        rep = report_from_counts(total, classes)
        if ray_total is not None:
            rep.ray_iou, rep.mean_ray_iou = ray_scores_from_counts(ray_total)
        report_mod.write_report(rep, Path(report_dir), figures=figures)
        click.echo(report_mod.format_table(rep))

    _run(go)


@main.command("synth")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--scenario", "scenario_path", type=click.Path(exists=True), default=None,
              help="JSON file overriding scenario fields.")
@click.option("--label-grid", default=None,
              help="Also write per-frame ground-truth grids on this grid "
                   "('ox,oy,oz:resolution:nx,ny,nz').")
@click.option("--corrupt-fraction", type=float, default=0.0, show_default=True)
@click.option("--corrupt-magnitude", type=float, default=0.0, show_default=True)
def synth_cmd(out_dir, seed, scenario_path, label_grid, corrupt_fraction, corrupt_magnitude) -> None:
    """Write a synthetic sequence (depth, masks, manifest, optional GT grids)."""

    def go():
        spec_kwargs = {}
        if scenario_path:
            with open(scenario_path) as fh:
                raw = json.load(fh)
            actors = tuple(
                synth.ActorSpec(
                    class_name=a["class_name"],
                    extents=tuple(a["extents"]),
                    start=tuple(a["start"]),
                    velocity=tuple(a["velocity"]),
                )
                for a in raw.pop("actors", [])
            )
            spec_kwargs = {k: (tuple(v) if isinstance(v, list) else v) for k, v in raw.items()}
            if actors:
                spec_kwargs["actors"] = actors
        spec = synth.ScenarioSpec(**spec_kwargs)
        grid = _parse_grid(label_grid) if label_grid else None
        _, manifest, manifest_path = synth.synthesize_sequence(
            spec, seed, Path(out_dir), label_grid=grid,
            corrupt_fraction=corrupt_fraction, corrupt_magnitude=corrupt_magnitude,
        )
        click.echo(f"wrote {len(manifest.frames)}-frame sequence to {manifest_path}")

    _run(go)


@main.command("export-ply")
@click.argument("grid_file", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--classes", "classes_path", type=click.Path(exists=True), default=None)
def export_ply_cmd(grid_file, out_path, classes_path) -> None:
    """Export the occupied cells of a grid file as a colored ASCII PLY."""

    def go():
        classes = _load_classes(classes_path)
        grid, _ = formats.read_grid(grid_file)
        formats.export_ply(grid, out_path, classes)
        click.echo(f"wrote {out_path}")

    _run(go)


if __name__ == "__main__":
    main()
