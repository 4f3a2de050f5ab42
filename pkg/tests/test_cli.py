"""End-to-end tests for the command line interface."""

import json

import pytest

from autobox3d.cli import _load_pipeline_config, _parse_frames, build_parser, main
from autobox3d.pipeline import load_config


def _write_scene_spec(path, frames=6, seed=4, sigma=0.01):
    spec = {
        "seed": seed,
        "frames": frames,
        "camera_height": 1.6,
        "ego": {"waypoints": [[0, 0], [0, 40]], "speed": 4.0},
        "cars": [
            {
                "dims": [3.9, 1.6, 1.5],
                "position": [-2.5, 14.0],
                "yaw": 1.1,
                "confidence": 0.9,
            }
        ],
        "noise": {"sigma": sigma, "outlier_fraction": 0.0},
    }
    path.write_text(json.dumps(spec))


def test_parse_frames():
    assert _parse_frames("1,2, 3") == [1, 2, 3]
    assert _parse_frames("7") == [7]
    assert _parse_frames("4,,") == [4]
    with pytest.raises(ValueError):
        _parse_frames(" , ")


def test_cli_flags_override_the_config():
    parser = build_parser()
    args = parser.parse_args(
        [
            "autolabel",
            "seq",
            "--out",
            "x",
            "--workers",
            "3",
            "--canonical",
            "--canonical-focal",
            "900",
        ]
    )
    cfg = _load_pipeline_config(args)
    assert cfg.workers == 3
    assert cfg.canonical_output is True
    assert cfg.canonical.canonical_focal == 900.0


def test_cli_full_round_trip(tmp_path, capsys):
    spec_path = tmp_path / "scene.json"
    _write_scene_spec(spec_path)

    seq = tmp_path / "seq"
    assert main(["synth", "--spec", str(spec_path), "--out", str(seq)]) == 0
    out = capsys.readouterr().out
    assert "6 frames" in out
    assert (seq / "depth" / "000000.sowd").exists()
    assert (seq / "labels_gt" / "000005.txt").exists()

    cfg_path = tmp_path / "cfg.json"
    assert main(["config", "--out", str(cfg_path)]) == 0
    capsys.readouterr()
    load_config(cfg_path).validate()

    pred = tmp_path / "pred"
    assert main(["autolabel", str(seq), "--out", str(pred), "--config", str(cfg_path)]) == 0
    timing_text = capsys.readouterr().out
    assert "frames labelled: 6" in timing_text
    assert "mean per frame" in timing_text
    assert sorted(p.name for p in pred.glob("*.txt")) == [f"00000{i}.txt" for i in range(6)]
    assert (pred / "timing.json").exists()

    report_path = tmp_path / "report.json"
    code = main(
        [
            "evaluate",
            "--pred",
            str(pred),
            "--gt",
            str(seq / "labels_gt"),
            "--out",
            str(report_path),
        ]
    )
    assert code == 0
    printed = capsys.readouterr().out
    report = json.loads(report_path.read_text())
    assert json.loads(printed) == report
    assert report["frames"] == 6
    assert report["ground_truth_boxes"] == 6
    # a clean parked car a few meters out is labelled well inside IoU 0.5
    assert report["metrics"]["ap_bev@0.5"] == 1.0
    assert report["metrics"]["ap_3d@0.5"] == 1.0
    assert report["metrics"]["ap_bev@0.3"] == 1.0


def test_cli_frames_subset_and_seed_override(tmp_path, capsys):
    spec_path = tmp_path / "scene.json"
    _write_scene_spec(spec_path, frames=3, sigma=0.05)

    seq_a = tmp_path / "a"
    seq_b = tmp_path / "b"
    assert main(["synth", "--spec", str(spec_path), "--out", str(seq_a)]) == 0
    assert main(["synth", "--spec", str(spec_path), "--out", str(seq_b), "--seed", "11"]) == 0
    capsys.readouterr()
    same = (seq_a / "depth" / "000000.sowd").read_bytes()
    other = (seq_b / "depth" / "000000.sowd").read_bytes()
    assert same != other  # the seed override reaches the noise draws

    pred = tmp_path / "pred"
    assert main(["autolabel", str(seq_a), "--out", str(pred), "--frames", "1"]) == 0
    capsys.readouterr()
    assert sorted(p.name for p in pred.glob("*.txt")) == ["000001.txt"]

    # evaluating against the full ground truth set must refuse cleanly
    code = main(["evaluate", "--pred", str(pred), "--gt", str(seq_a / "labels_gt")])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_cli_error_exit_codes(tmp_path, capsys):
    assert main(["synth", "--spec", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 2
    assert "error:" in capsys.readouterr().err

    assert main(["autolabel", str(tmp_path / "nodir"), "--out", str(tmp_path / "p")]) == 2
    assert "error:" in capsys.readouterr().err

    assert main(["config", "--out", str(tmp_path / "missing_parent" / "cfg.json")]) == 2
    assert "error:" in capsys.readouterr().err

    spec_path = tmp_path / "scene.json"
    spec_path.write_text("{not json")
    assert main(["synth", "--spec", str(spec_path), "--out", str(tmp_path / "o")]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_bad_frames_argument(tmp_path, capsys):
    spec_path = tmp_path / "scene.json"
    _write_scene_spec(spec_path, frames=2)
    seq = tmp_path / "seq"
    assert main(["synth", "--spec", str(spec_path), "--out", str(seq)]) == 0
    capsys.readouterr()
    assert main(["autolabel", str(seq), "--out", str(tmp_path / "p"), "--frames", "abc"]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_rejects_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])
    with pytest.raises(SystemExit):
        main(["frobnicate"])
