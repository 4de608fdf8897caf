import json

import pytest

from constants.exit_codes import ExitCode
from main import run
from repositories import report_repository
from schemas.phantom_schema import PhantomSpec, RigidShift
from tests.helpers import tiny_config


def _envelope(err: str) -> dict:
    return json.loads(err[err.index('{\n  "message"'):])


@pytest.fixture
def phantom_dir(tmp_path, capsys):
    spec = PhantomSpec(dims=(32, 32, 16), spacing=(0.9, 0.9, 2.0), deformation=RigidShift(shift_mm=(1.8, 0.0, 0.0)))
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(spec.model_dump_json())
    assert run(["phantom", "--spec", str(spec_path), "--out", str(tmp_path / "phantom"), "--seed", "3"]) == ExitCode.SUCCESS
    capsys.readouterr()
    return tmp_path / "phantom"


def test_phantom_prints_the_manifest(tmp_path, capsys):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({"dims": [32, 32, 16], "spacing": [0.9, 0.9, 2.0]}))
    assert run(["phantom", "--spec", str(spec_path), "--out", str(tmp_path / "out"), "--seed", "8"]) == 0

    response = json.loads(capsys.readouterr().out)
    assert response["exit_code"] == 0
    assert response["error"] is None
    assert response["data"]["seed"] == 8
    assert {entry["role"] for entry in response["data"]["files"]} >= {"moving", "target", "truth_dvf", "body_mask"}
    assert (tmp_path / "out" / "manifest.json").is_file()


def test_info_summarizes_volumes_and_fields(phantom_dir, capsys):
    assert run(["info", "--file", str(phantom_dir / "moving.json")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "kind: volume" in lines
    assert "dims: 32 32 16" in lines
    assert "channels: 1" in lines
    assert any(line.startswith("sha256: ") and len(line) == len("sha256: ") + 64 for line in lines)

    assert run(["info", "--file", str(phantom_dir / "truth_dvf")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "kind: dvf" in lines
    assert "channels: 3" in lines


def test_info_renders_slices(phantom_dir, capsys):
    assert run(["info", "--file", str(phantom_dir / "moving.json"), "--slice", "z=8"]) == 0
    assert f"slice: {phantom_dir / 'moving_z8.pgm'}" in capsys.readouterr().out
    assert (phantom_dir / "moving_z8.pgm").read_bytes().startswith(b"P5\n32 32\n255\n")

    fused = phantom_dir / "fused.ppm"
    args = ["info", "--file", str(phantom_dir / "moving.json"), "--slice", "z=8",
            "--fusion", str(phantom_dir / "target.json"), "--slice-out", str(fused), "--window=-500,500"]
    assert run(args) == 0
    assert fused.read_bytes().startswith(b"P6\n32 32\n255\n")


@pytest.mark.parametrize(
    "extra",
    [["--slice", "y=3"], ["--slice", "z=99"], ["--window", "10"], ["--slice", "z=1", "--window", "5,5"]],
)
def test_info_bad_slice_options_are_usage_errors(phantom_dir, capsys, extra):
    assert run(["info", "--file", str(phantom_dir / "moving.json")] + extra) == ExitCode.USAGE_ERROR
    envelope = _envelope(capsys.readouterr().err)
    assert envelope["exit_code"] == ExitCode.USAGE_ERROR
    assert envelope["data"] is None


def test_missing_arguments_are_usage_errors(capsys):
    assert run(["phantom", "--out", "x"]) == ExitCode.USAGE_ERROR
    err = capsys.readouterr().err
    assert "usage:" in err
    assert _envelope(err)["error"]


def test_unknown_command_is_a_usage_error(capsys):
    assert run(["deform"]) == ExitCode.USAGE_ERROR


def test_missing_input_is_a_data_error(tmp_path, capsys):
    assert run(["info", "--file", str(tmp_path / "absent.json")]) == ExitCode.DATA_ERROR
    envelope = _envelope(capsys.readouterr().err)
    assert envelope["exit_code"] == ExitCode.DATA_ERROR
    assert "absent.json" in envelope["error"]


def test_invalid_phantom_spec_is_a_data_error(tmp_path, capsys):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({"dims": [4, 16, 16]}))
    assert run(["phantom", "--spec", str(spec_path), "--out", str(tmp_path / "out")]) == ExitCode.DATA_ERROR


def test_bad_profile_is_a_usage_error(phantom_dir, tmp_path, capsys):
    args = [
        "evaluate",
        "--deformed", str(phantom_dir / "moving.json"),
        "--target", str(phantom_dir / "target.json"),
        "--dvf", str(phantom_dir / "truth_dvf.json"),
        "--landmarks-moving", str(phantom_dir / "landmarks_moving.csv"),
        "--landmarks-target", str(phantom_dir / "landmarks_target.csv"),
        "--out", str(tmp_path / "report"),
        "--profile", "x=3",
    ]
    assert run(args) == ExitCode.USAGE_ERROR
    assert not (tmp_path / "report.json").exists()


def test_train_register_evaluate(phantom_dir, tmp_path, capsys):
    config_path = tmp_path / "config.json"
    report_repository.write_model(config_path, tiny_config())

    assert run(["train", "--pairs", str(phantom_dir / "manifest.json"), "--config", str(config_path),
                "--out", str(tmp_path / "ckpt"), "--seed", "2"]) == 0
    trained = json.loads(capsys.readouterr().out)["data"]
    assert trained["records"] == 2
    assert len(trained["checkpoints"]) == 4

    assert run(["register", "--moving", str(phantom_dir / "moving.json"), "--target", str(phantom_dir / "target.json"),
                "--ckpt", str(tmp_path / "ckpt"), "--out", str(tmp_path / "reg"), "--workers", "2"]) == 0
    timing = json.loads(capsys.readouterr().out)["data"]
    assert timing["patch_count"] == 9
    assert timing["worker_count"] == 2
    assert timing["dims"] == [32, 32, 16]

    args = [
        "evaluate",
        "--deformed", str(tmp_path / "reg" / "deformed.json"),
        "--target", str(phantom_dir / "target.json"),
        "--dvf", str(tmp_path / "reg" / "final_dvf.json"),
        "--landmarks-moving", str(phantom_dir / "landmarks_moving.csv"),
        "--landmarks-target", str(phantom_dir / "landmarks_target.csv"),
        "--out", str(tmp_path / "report"),
        "--profile", "x=16,z=8",
    ]
    assert run(args) == 0
    report = json.loads(capsys.readouterr().out)["data"]
    assert [row["fraction"] for row in report["fractions"]] == ["fx1"]
    assert report["overall"]["fraction"] == "overall"
    assert (tmp_path / "report.csv").read_text().splitlines()[0] == "fraction,tre_mean,tre_std,mae,ncc,dsc,jac_min,fold_frac"
    assert (tmp_path / "report_profile.csv").is_file()
