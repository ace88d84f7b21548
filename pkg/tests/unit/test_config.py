"""Юнит-тесты конфигурации и масштабирования параметров по разрешению."""
from dataclasses import fields
from pathlib import Path

import pytest

from app.core.config import Config, ConfigError, resolve_scaled_params
from app.core.config.config import DEFAULT_CONFIG_PATH


def test_default_file_matches_dataclass_defaults() -> None:
    assert Config.load() == Config()
    assert Config.load(DEFAULT_CONFIG_PATH) == Config()


def test_round_trip_is_lossless(tmp_path: Path) -> None:
    config = Config(alpha=1.2345678901234e-4, loop_stride=3, loop_closing=False, seed=42, hex_spacing=55.5)
    assert Config.load(config.save(tmp_path / "cfg" / "run.json")) == config


@pytest.mark.parametrize(
    "data, field_path",
    [
        ({"alpha": -1.0}, "alpha"),
        ({"loop_stride": 0}, "loop_stride"),
        ({"blend_stride": 1.5}, "blend_stride"),
        ({"loop_closing": "yes"}, "loop_closing"),
        ({"bogus": 1}, "<root>"),
    ],
)
def test_invalid_values_report_field(data: dict, field_path: str) -> None:
    with pytest.raises(ConfigError) as info:
        Config.from_mapping(data)
    assert info.value.field_path == field_path


def test_integral_floats_are_accepted() -> None:
    config = Config.from_mapping({"loop_stride": 4.0, "hex_spacing": 50})
    assert config.loop_stride == 4 and isinstance(config.loop_stride, int)
    assert isinstance(config.hex_spacing, float)


def test_overrides_are_parsed_as_json_scalars() -> None:
    config = Config().with_overrides(["alpha=1e-4", "loop_closing=false", "workers=3"], seed=9, gamma=None)
    assert config.alpha == 1e-4
    assert config.loop_closing is False
    assert config.workers == 3
    assert config.seed == 9
    assert config.gamma == Config().gamma


def test_bad_overrides() -> None:
    with pytest.raises(ConfigError):
        Config().with_overrides(["alpha"])
    with pytest.raises(ConfigError) as info:
        Config().with_overrides(["alpha=fast"])
    assert info.value.field_path == "alpha"


def test_missing_and_broken_files(tmp_path: Path) -> None:
    with pytest.raises(ConfigError):
        Config.load(tmp_path / "absent.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{alpha: 1", encoding="utf-8")
    with pytest.raises(ConfigError):
        Config.load(broken)


def test_reference_resolution_keeps_parameters() -> None:
    params = resolve_scaled_params(Config(), 480, 270)
    assert params.scale == 1.0
    assert params.config == Config()


def test_double_resolution() -> None:
    params = resolve_scaled_params(Config(), 960, 540)
    assert params.scale == 2.0
    assert params.config.alpha == pytest.approx(5e-5, rel=1e-12)
    assert params.config.beta == pytest.approx(3e-3 / 4, rel=1e-12)
    assert params.config.gamma == pytest.approx(5e-3 / 4, rel=1e-12)
    assert params.config.hex_spacing == pytest.approx(120.0)
    assert params.config.keyframe_H == pytest.approx(80.0)
    assert params.config.inlier_threshold == pytest.approx(10.0)


@pytest.mark.parametrize("width, height", [(440, 280), (640, 480), (1920, 1080)])
def test_scale_formula(width: int, height: int) -> None:
    s = (width / 480 + height / 270) / 2
    params = resolve_scaled_params(Config(), width, height)
    assert params.scale == pytest.approx(s, rel=1e-12)
    assert params.config.alpha == pytest.approx(2e-4 / s**2, rel=1e-12)
    assert params.config.field_alpha == pytest.approx(2e-3 / s**2, rel=1e-12)


def test_scale_at_440_by_280() -> None:
    assert resolve_scaled_params(Config(), 440, 280).scale == pytest.approx(0.97685, abs=1e-5)


def test_stage_parameters_follow_config() -> None:
    config = Config(orb_features=700, em_max_iters=6, arap_max_iters=2, band_height=32, loop_closing=False)
    params = resolve_scaled_params(config, 480, 270)
    slam = params.slam
    assert slam.detector.max_features == 700
    assert slam.estimator.max_iters == 6
    assert slam.arap.max_iters == 2
    assert slam.loop_closing is False
    assert params.blend.band_height == 32
    assert {f.name for f in fields(Config)} == set(Config().to_mapping())


def test_resolution_must_be_positive() -> None:
    with pytest.raises(ConfigError):
        resolve_scaled_params(Config(), 0, 270)
