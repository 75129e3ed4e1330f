"""vxadapter CLI: export raw captures into pipeline interchange files."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from vxadapter.backends import StubGeometryBackend, StubSegmentationBackend
from vxadapter.config import AdapterConfig
from vxadapter.dataset import DatasetError
from vxadapter.export import ExportError, export_sequence

BACKENDS = {
    "stub": (StubGeometryBackend, StubSegmentationBackend),
    # Real foundation-model backends (metric depth + open-vocabulary
    # segmentation) plug in here behind the same protocols; they need their
    # own weights and typically a GPU.
}


@click.group()
def main() -> None:
    """Foundation-model adapter for the voxel label pipeline."""


@main.command()
@click.option("--dataset", "dataset_root", required=True, type=click.Path(exists=True))
@click.option("--sequence", required=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--backend", type=click.Choice(sorted(BACKENDS)), default="stub",
              show_default=True)
@click.option("--threshold", type=float, default=0.2, show_default=True,
              help="Logit threshold forwarded to mask fusion.")
def export(dataset_root, sequence, out_dir, backend, threshold) -> None:
    """Run the backends over one sequence and emit interchange files."""
    geometry_cls, segmentation_cls = BACKENDS[backend]
    config = AdapterConfig(
        dataset_root=Path(dataset_root), sequence=sequence,
        output_dir=Path(out_dir), logit_threshold=threshold,
    )
    try:
        result = export_sequence(config, geometry_cls(), segmentation_cls())
    except (DatasetError, ExportError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"exported {result.frames_done} frame(s) "
               f"({result.frames_skipped} already done) -> {result.manifest_path}")


if __name__ == "__main__":
    main()
