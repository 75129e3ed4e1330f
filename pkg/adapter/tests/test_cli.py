from click.testing import CliRunner

from test_export import make_dataset
from vxadapter.cli import main


def test_export_cli_roundtrip(tmp_path):
    ds = make_dataset(tmp_path / "raw", frames=1, cameras=("cam0",))
    runner = CliRunner()
    result = runner.invoke(main, [
        "export", "--dataset", str(ds), "--sequence", "seq0",
        "--out", str(tmp_path / "out"), "--backend", "stub",
    ])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "out" / "manifest.json").is_file()
    assert "exported 1 frame(s)" in result.output


def test_export_cli_unknown_sequence(tmp_path):
    ds = make_dataset(tmp_path / "raw")
    runner = CliRunner()
    result = runner.invoke(main, [
        "export", "--dataset", str(ds), "--sequence", "nope",
        "--out", str(tmp_path / "out"),
    ])
    assert result.exit_code == 1
    assert "missing calibration" in result.output
