"""Юнит-тесты разбора командной строки."""
from pathlib import Path

import numpy as np
import pytest

from app.app import build_parser, load_config, main
from app.core.features.io import load_matches
from app.core.frames.io import save_png


def test_subcommands_are_registered() -> None:
    parser = build_parser()
    args = parser.parse_args(["mosaic", "frames", "-o", "out", "--no-loop", "--set", "alpha=1e-4", "--workers", "2"])
    assert args.command == "mosaic"
    assert args.no_loop and args.overrides == ["alpha=1e-4"] and args.workers == 2
    assert parser.parse_args(["synth", "-o", "out"]).scene == "default"
    assert parser.parse_args(["eval", "--scene", "s.json", "--run", "run"]).output is None
    assert parser.parse_args(["match-dump", "a.png", "b.png", "-o", "m.txt"]).image_b == "b.png"
    with pytest.raises(SystemExit):
        parser.parse_args(["mosaic"])


def test_options_reach_config() -> None:
    argv = ["mosaic", "in", "-o", "out", "--no-loop", "--seed", "5", "--set", "loop_stride=3"]
    args = build_parser().parse_args(argv)
    config = load_config(args)
    assert config.loop_closing is False
    assert config.seed == 5
    assert config.loop_stride == 3


def test_bad_override_fails(tmp_path: Path) -> None:
    assert main(["mosaic", str(tmp_path), "-o", str(tmp_path / "out"), "--set", "loop_stride=0"]) == 1
    assert main(["mosaic", str(tmp_path), "-o", str(tmp_path / "out"), "--set", "unknown=1"]) == 1


def test_missing_inputs_fail(tmp_path: Path) -> None:
    assert main(["mosaic", str(tmp_path / "absent"), "-o", str(tmp_path / "out")]) == 1
    assert main(["mosaic", str(tmp_path), "-o", str(tmp_path / "out")]) == 1
    assert main(["eval", "--scene", "default", "--run", str(tmp_path)]) == 1
    assert main(["synth", "--scene", str(tmp_path / "absent.scene.json"), "-o", str(tmp_path / "out")]) == 1


def test_match_dump_writes_matches(tmp_path: Path, texture: np.ndarray) -> None:
    save_png(tmp_path / "a.png", texture[:200, :300])
    save_png(tmp_path / "b.png", texture[4:204, 6:306])
    target = tmp_path / "matches.txt"
    assert main(["match-dump", str(tmp_path / "a.png"), str(tmp_path / "b.png"), "-o", str(target)]) == 0
    matches = load_matches(target)
    assert len(matches) > 20
    shifts = np.array([np.subtract(m.point_a, m.point_b) for m in matches])
    np.testing.assert_allclose(np.median(shifts, axis=0), [6.0, 4.0], atol=0.5)
