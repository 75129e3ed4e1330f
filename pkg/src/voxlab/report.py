"""Rendering of evaluation reports: JSON, CSV, a fixed-width table, and
matplotlib figures written next to the delimited output."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from voxlab.metrics import EvalReport  # noqa: E402


def format_table(report: EvalReport) -> str:
    lines = []
    lines.append(f"{'metric':<24}{'value':>10}")
    lines.append("-" * 34)
    lines.append(f"{'mIoU':<24}{report.miou:>10.4f}")
    lines.append(f"{'geometric IoU':<24}{report.geometric_iou:>10.4f}")
    for tau in sorted(report.ray_iou):
        lines.append(f"{f'RayIoU@{tau:g}m':<24}{report.ray_iou[tau]:>10.4f}")
    if report.ray_iou:
        lines.append(f"{'mean RayIoU':<24}{report.mean_ray_iou:>10.4f}")
    lines.append("-" * 34)
    for name in sorted(report.per_class_iou):
        lines.append(f"{name:<24}{report.per_class_iou[name]:>10.4f}")
    return "\n".join(lines)


def write_csv(report: EvalReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerow(["miou", f"{report.miou:.6f}"])
        writer.writerow(["geometric_iou", f"{report.geometric_iou:.6f}"])
        for tau in sorted(report.ray_iou):
            writer.writerow([f"ray_iou@{tau:g}", f"{report.ray_iou[tau]:.6f}"])
        if report.ray_iou:
            writer.writerow(["mean_ray_iou", f"{report.mean_ray_iou:.6f}"])
        for name in sorted(report.per_class_iou):
            writer.writerow([f"iou_{name}", f"{report.per_class_iou[name]:.6f}"])


def render_figures(report: EvalReport, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    if report.per_class_iou:
        names = sorted(report.per_class_iou)
        values = [report.per_class_iou[n] for n in names]
        fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * len(names)), 3.2))
        ax.bar(range(len(names)), values, color="#3b7dd8")
        ax.axhline(report.miou, color="#c44e52", linestyle="--", linewidth=1,
                   label=f"mIoU = {report.miou:.3f}")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
        ax.set_ylabel("IoU")
        ax.set_ylim(0, 1)
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = out_dir / "per_class_iou.png"
        fig.savefig(path, dpi=130)
        plt.close(fig)
        written.append(path)

    if report.ray_iou:
        taus = sorted(report.ray_iou)
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        ax.plot(taus, [report.ray_iou[t] for t in taus], marker="o", color="#3b7dd8")
        ax.set_xlabel("distance threshold [m]")
        ax.set_ylabel("RayIoU")
        ax.set_ylim(0, 1)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        path = out_dir / "ray_iou.png"
        fig.savefig(path, dpi=130)
        plt.close(fig)
        written.append(path)
    return written


def write_report(report: EvalReport, out_dir: Path, figures: bool = True) -> None:
    """Write report.json, report.csv, report.txt, and figures into a directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report.to_json(), fh, indent=2)
    write_csv(report, out_dir / "report.csv")
    (out_dir / "report.txt").write_text(format_table(report) + "\n")
    if figures:
        render_figures(report, out_dir / "figures")
