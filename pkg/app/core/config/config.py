"""Конфигурация прогона: плоский JSON-документ ключ → значение."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping

from jsonschema import Draft7Validator

from app.core.features.detector import DetectorConfig
from app.core.fieldest.estimator import EstimatorParams
from app.core.mosaic.blending import BlendParams
from app.core.slam.arap import ArapParams
from app.core.slam.pipeline import SlamParams

DATA_DIR = Path(__file__).resolve().parents[3] / "data"
CONFIG_SCHEMA_PATH = DATA_DIR / "config.schema.json"
DEFAULT_CONFIG_PATH = DATA_DIR / "default.config.json"

REFERENCE_WIDTH = 480
REFERENCE_HEIGHT = 270


class ConfigError(ValueError):
    """Ошибка конфигурации с указанием поля."""

    def __init__(self, message: str, field_path: str = ""):
        super().__init__(f"{field_path}: {message}" if field_path else message)
        self.field_path = field_path


@dataclass(frozen=True)
class Config:
    alpha: float = 2e-4
    beta: float = 3e-3
    gamma: float = 5e-3
    loop_stride: int = 5
    blend_stride: int = 2
    keyframe_H: float = 40.0
    hex_spacing: float = 60.0
    field_alpha: float = 2e-3
    inlier_threshold: float = 5.0
    em_max_iters: int = 10
    em_tolerance: float = 1e-4
    neighbors_k: int = 8
    seed_hypotheses: int = 16
    orb_features: int = 1000
    ratio_test: float = 0.8
    fast_threshold: int = 10
    fast_threshold_min: int = 2
    arap_max_iters: int = 5
    arap_sigma2: float = 100.0
    arap_cutoff: float = 1e-3
    weight_cap: int = 30
    tile_size: int = 256
    band_height: int = 64
    workers: int = 0
    seed: int = 0
    loop_closing: bool = True

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "Config":
        validate_mapping(data)
        values: Dict[str, Any] = {}
        for item in fields(cls):
            if item.name not in data:
                continue
            value = data[item.name]
            # JSON не различает 5 и 5.0
            if item.type == "float":
                value = float(value)
            elif item.type == "int":
                value = int(value)
            values[item.name] = value
        return cls(**values)

    def to_mapping(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Config":
        config_path = Path(path) if path is not None else DEFAULT_CONFIG_PATH
        try:
            data = json.loads(config_path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"Файл конфигурации не найден: {config_path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"Некорректный JSON в {config_path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("Ожидался JSON-объект", "<root>")
        return cls.from_mapping(data)

    def save(self, path: str | Path) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(self.to_mapping(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        return target

    def with_overrides(self, overrides: Iterable[str] = (), **values: Any) -> "Config":
        """Apply ``key=value`` strings (values parsed as JSON scalars) and keyword values.

        ``None`` keywords are ignored.
        """

        merged = self.to_mapping()
        for item in overrides:
            key, sep, raw = item.partition("=")
            key = key.strip()
            if not sep or not key:
                raise ConfigError(f"Ожидалось key=value, получено {item!r}", key or "<root>")
            try:
                merged[key] = json.loads(raw)
            except json.JSONDecodeError:
                merged[key] = raw
        merged.update({key: value for key, value in values.items() if value is not None})
        return Config.from_mapping(merged)


def validate_mapping(data: Mapping[str, Any]) -> None:
    schema = json.loads(CONFIG_SCHEMA_PATH.read_text(encoding="utf-8"))
    errors = sorted(Draft7Validator(schema).iter_errors(dict(data)), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        path = "/".join(str(part) for part in first.absolute_path) or "<root>"
        raise ConfigError(first.message, path)


@dataclass(frozen=True)
class EffectiveParams:
    """Parameters after resolution scaling, ready for the pipeline stages."""

    scale: float
    config: Config

    @property
    def slam(self) -> SlamParams:
        cfg = self.config
        return SlamParams(
            alpha=cfg.alpha,
            beta=cfg.beta,
            gamma=cfg.gamma,
            loop_stride=cfg.loop_stride,
            keyframe_H=cfg.keyframe_H,
            hex_spacing=cfg.hex_spacing,
            loop_closing=cfg.loop_closing,
            estimator=EstimatorParams(
                inlier_threshold=cfg.inlier_threshold,
                field_alpha=cfg.field_alpha,
                beta=cfg.beta,
                neighbors_k=cfg.neighbors_k,
                seed_hypotheses=cfg.seed_hypotheses,
                max_iters=cfg.em_max_iters,
                tolerance=cfg.em_tolerance,
                seed=cfg.seed,
            ),
            detector=DetectorConfig(
                max_features=cfg.orb_features,
                fast_threshold=cfg.fast_threshold,
                min_fast_threshold=min(cfg.fast_threshold_min, cfg.fast_threshold),
                ratio_test=cfg.ratio_test,
            ),
            arap=ArapParams(
                alpha=cfg.alpha, max_iters=cfg.arap_max_iters, sigma2_arap=cfg.arap_sigma2, cutoff=cfg.arap_cutoff
            ),
        )

    @property
    def blend(self) -> BlendParams:
        return BlendParams(alpha=self.config.alpha, band_height=self.config.band_height)


def resolution_scale(frame_width: int, frame_height: int) -> float:
    return (frame_width / REFERENCE_WIDTH + frame_height / REFERENCE_HEIGHT) / 2.0


def resolve_scaled_params(config: Config, frame_width: int, frame_height: int) -> EffectiveParams:
    """Scale kernel widths by ``1/s²`` and pixel thresholds by ``s``, ``s = (w/480 + h/270) / 2``."""

    if frame_width <= 0 or frame_height <= 0:
        raise ConfigError(f"Размер кадра должен быть положительным: {frame_width}x{frame_height}", "resolution")
    s = resolution_scale(frame_width, frame_height)
    inv = 1.0 / (s * s)
    scaled = replace(
        config,
        alpha=config.alpha * inv,
        beta=config.beta * inv,
        gamma=config.gamma * inv,
        field_alpha=config.field_alpha * inv,
        keyframe_H=config.keyframe_H * s,
        hex_spacing=config.hex_spacing * s,
        inlier_threshold=config.inlier_threshold * s,
    )
    return EffectiveParams(scale=s, config=scaled)
