"""Синтетическая сцена: текстура, гладкая деформация и траектория камеры.

Frame pixel ``u`` at time ``t`` looks at world point ``y = p_t + s_t R(θ_t) (u - u_c)``;
the surface under it is the texture point ``z = y + D_t(y)`` with::

    D_t(y) = Σ_b A_b sin(2π f_b t + φ_b) exp(-||y - c_b||² / (2 σ_b²))

``D_t`` is a diffeomorphism while ``Σ |A_b| e^{-1/2} / σ_b < 1`` (the
Lipschitz bound of the bumps), which also makes the fixed-point inversion
``y <- z - D_t(y)`` converge.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from jsonschema import Draft7Validator
from PIL import Image, ImageDraw
from scipy import ndimage

DATA_DIR = Path(__file__).resolve().parents[3] / "data"
SCENE_SCHEMA_PATH = DATA_DIR / "scene.schema.json"
SCENES_DIR = DATA_DIR / "scenes"

LIPSCHITZ_FACTOR = math.exp(-0.5)
RANDOM_BUMP_RATIO = 0.8


class SceneError(ValueError):
    """Некорректное описание сцены или нарушена граница диффеоморфизма."""


@dataclass(frozen=True)
class Bump:
    center: Tuple[float, float]
    amplitude: Tuple[float, float]
    sigma: float
    frequency: float
    phase: float = 0.0


@dataclass(frozen=True)
class CameraPose:
    frame: int
    position: Tuple[float, float]
    angle: float = 0.0
    scale: float = 1.0


@dataclass
class SyntheticScene:
    name: str
    seed: int
    resolution: Tuple[int, int]
    num_frames: int
    texture: np.ndarray
    bumps: Tuple[Bump, ...]
    waypoints: Tuple[CameraPose, ...]
    source: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.waypoints:
            raise SceneError("Сцена должна содержать хотя бы одну позу камеры")
        ratio = lipschitz_ratio(self.bumps)
        if ratio >= 1.0:
            raise SceneError(f"Деформация не является диффеоморфизмом: Σ|A|·0.607/σ = {ratio:.3f} ≥ 1")

    @property
    def width(self) -> int:
        return int(self.resolution[0])

    @property
    def height(self) -> int:
        return int(self.resolution[1])

    @property
    def frame_center(self) -> np.ndarray:
        return np.array([(self.width - 1) / 2.0, (self.height - 1) / 2.0])

    def camera_pose(self, t: float) -> Tuple[np.ndarray, float, float]:
        """Position, angle and scale at frame ``t``, linearly interpolated between waypoints."""

        frames = np.array([pose.frame for pose in self.waypoints], dtype=np.float64)
        xs = np.array([pose.position[0] for pose in self.waypoints])
        ys = np.array([pose.position[1] for pose in self.waypoints])
        angles = np.array([pose.angle for pose in self.waypoints])
        scales = np.array([pose.scale for pose in self.waypoints])
        position = np.array([np.interp(t, frames, xs), np.interp(t, frames, ys)])
        return position, float(np.interp(t, frames, angles)), float(np.interp(t, frames, scales))

    def displacement(self, points: np.ndarray, t: float) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        total = np.zeros_like(points)
        for bump in self.bumps:
            strength = math.sin(2.0 * math.pi * bump.frequency * t + bump.phase)
            if strength == 0.0:
                continue
            diff = points - np.asarray(bump.center)
            gauss = np.exp(-np.sum(diff**2, axis=-1) / (2.0 * bump.sigma**2))
            total += strength * gauss[..., None] * np.asarray(bump.amplitude)
        return total

    def camera_to_world(self, pixels: np.ndarray, t: float) -> np.ndarray:
        position, angle, scale = self.camera_pose(t)
        c, s = math.cos(angle), math.sin(angle)
        rel = np.asarray(pixels, dtype=np.float64) - self.frame_center
        rotated = np.stack([c * rel[..., 0] - s * rel[..., 1], s * rel[..., 0] + c * rel[..., 1]], axis=-1)
        return position + scale * rotated

    def world_to_camera(self, points: np.ndarray, t: float) -> np.ndarray:
        position, angle, scale = self.camera_pose(t)
        c, s = math.cos(angle), math.sin(angle)
        rel = (np.asarray(points, dtype=np.float64) - position) / scale
        local = np.stack([c * rel[..., 0] + s * rel[..., 1], -s * rel[..., 0] + c * rel[..., 1]], axis=-1)
        return local + self.frame_center

    def frame_to_world(self, pixels: np.ndarray, t: float) -> np.ndarray:
        """Texture coordinates seen by frame pixels at time ``t``."""

        y = self.camera_to_world(pixels, t)
        return y + self.displacement(y, t)

    def world_to_frame(self, points: np.ndarray, t: float, max_iters: int = 100, tolerance: float = 1e-6) -> np.ndarray:
        """Frame pixels that see texture points ``points`` at time ``t`` (fixed-point inversion)."""

        z = np.asarray(points, dtype=np.float64)
        y = z.copy()
        for _ in range(max_iters):
            updated = z - self.displacement(y, t)
            step = float(np.max(np.abs(updated - y))) if updated.size else 0.0
            y = updated
            if step < tolerance:
                break
        return self.world_to_camera(y, t)

    def true_node_positions(self, anchors: np.ndarray, t: float) -> np.ndarray:
        """Where reference-frame points are seen at frame ``t``."""

        return self.world_to_frame(self.frame_to_world(anchors, 0), t)

    def to_mapping(self) -> Dict[str, Any]:
        return json.loads(json.dumps(self.source))


def lipschitz_ratio(bumps: Sequence[Bump]) -> float:
    return float(sum(math.hypot(*bump.amplitude) * LIPSCHITZ_FACTOR / bump.sigma for bump in bumps))


def _equalize(channel: np.ndarray) -> np.ndarray:
    ranks = np.empty(channel.size)
    ranks[np.argsort(channel, axis=None, kind="stable")] = np.arange(channel.size)
    return ranks.reshape(channel.shape) / max(channel.size - 1, 1)


def generate_texture(width: int, height: int, seed: int, octaves: int = 5, shapes: int = 80) -> np.ndarray:
    """Multi-scale value noise with random ellipses and rectangles on top.

    Octave cells halve down to 3 px with slowly decaying amplitude and
    every channel is histogram-equalised, so fine detail has full contrast
    everywhere. ``shapes`` counts outlined shapes per 640x400 px of texture.
    """

    rng = np.random.default_rng(seed)
    image = np.zeros((height, width, 3))
    amplitude = 1.0
    for octave in range(octaves):
        cell = 3 << (octaves - 1 - octave)
        grid = rng.random((height // cell + 2, width // cell + 2, 3))
        layer = ndimage.zoom(grid, (cell, cell, 1), order=3, mode="nearest")[:height, :width]
        image += amplitude * layer
        amplitude *= 0.85
    for channel in range(3):
        image[..., channel] = _equalize(image[..., channel])
    pil = Image.fromarray(np.round(image * 255).astype(np.uint8))
    draw = ImageDraw.Draw(pil)
    count = round(shapes * width * height / (640 * 400))
    for _ in range(count):
        x, y = rng.integers(0, width), rng.integers(0, height)
        w, h = rng.integers(6, 40, size=2)
        colour = tuple(int(v) for v in rng.integers(0, 256, size=3))
        outline = tuple(255 - v for v in colour)
        box = [int(x), int(y), int(x + w), int(y + h)]
        if rng.random() < 0.5:
            draw.ellipse(box, fill=colour, outline=outline, width=2)
        else:
            draw.rectangle(box, fill=colour, outline=outline, width=2)
    return np.asarray(pil, dtype=np.uint8)


def _random_bumps(
    spec: Mapping[str, Any], bounds: Tuple[float, float, float, float], rng: np.random.Generator
) -> List[Bump]:
    count = int(spec.get("count", 6))
    max_displacement = float(spec.get("max_displacement", 15.0))
    sigma_lo, sigma_hi = spec.get("sigma_range", [60.0, 120.0])
    freq_lo, freq_hi = spec.get("frequency_range", [0.005, 0.02])
    x0, y0, x1, y1 = bounds
    bumps: List[Bump] = []
    for _ in range(count):
        direction = rng.uniform(0.0, 2.0 * math.pi)
        bumps.append(
            Bump(
                center=(float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1))),
                amplitude=(max_displacement * math.cos(direction), max_displacement * math.sin(direction)),
                sigma=float(rng.uniform(sigma_lo, sigma_hi)),
                frequency=float(rng.uniform(freq_lo, freq_hi)),
            )
        )
    ratio = lipschitz_ratio(bumps)
    if ratio > RANDOM_BUMP_RATIO:
        factor = RANDOM_BUMP_RATIO / ratio
        bumps = [
            Bump(b.center, (b.amplitude[0] * factor, b.amplitude[1] * factor), b.sigma, b.frequency, b.phase)
            for b in bumps
        ]
    return bumps


def _validate(data: Mapping[str, Any]) -> None:
    schema = json.loads(SCENE_SCHEMA_PATH.read_text(encoding="utf-8"))
    errors = sorted(Draft7Validator(schema).iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        path = "/".join(str(part) for part in first.absolute_path) or "<root>"
        raise SceneError(f"Ошибка в описании сцены ({path}): {first.message}")


def scene_from_mapping(
    data: Mapping[str, Any], *, seed: Optional[int] = None, num_frames: Optional[int] = None
) -> SyntheticScene:
    _validate(data)
    source = json.loads(json.dumps(data))
    if seed is not None:
        source["seed"] = int(seed)
    if num_frames is not None:
        source["num_frames"] = int(num_frames)
    scene_seed = int(source.get("seed", 0))
    rng = np.random.default_rng(scene_seed)

    texture_spec = source["texture"]
    texture = generate_texture(
        int(texture_spec["width"]),
        int(texture_spec["height"]),
        scene_seed,
        int(texture_spec.get("octaves", 5)),
        int(texture_spec.get("shapes", 80)),
    )
    waypoints = tuple(
        CameraPose(
            frame=int(pose["frame"]),
            position=(float(pose["position"][0]), float(pose["position"][1])),
            angle=float(pose.get("angle", 0.0)),
            scale=float(pose.get("scale", 1.0)),
        )
        for pose in sorted(source["camera"]["waypoints"], key=lambda pose: pose["frame"])
    )
    deformation = source.get("deformation", {})
    bumps: List[Bump] = [
        Bump(
            center=(float(b["center"][0]), float(b["center"][1])),
            amplitude=(float(b["amplitude"][0]), float(b["amplitude"][1])),
            sigma=float(b["sigma"]),
            frequency=float(b["frequency"]),
            phase=float(b.get("phase", 0.0)),
        )
        for b in deformation.get("bumps", [])
    ]
    if "random" in deformation:
        xs = [pose.position[0] for pose in waypoints]
        ys = [pose.position[1] for pose in waypoints]
        width, height = source["resolution"]
        bounds = (min(xs) - width / 2, min(ys) - height / 2, max(xs) + width / 2, max(ys) + height / 2)
        bumps.extend(_random_bumps(deformation["random"], bounds, rng))

    return SyntheticScene(
        name=str(source.get("name", "scene")),
        seed=scene_seed,
        resolution=(int(source["resolution"][0]), int(source["resolution"][1])),
        num_frames=int(source["num_frames"]),
        texture=texture,
        bumps=tuple(bumps),
        waypoints=waypoints,
        source=source,
    )


def load_scene(path: str | Path, *, seed: Optional[int] = None, num_frames: Optional[int] = None) -> SyntheticScene:
    """Load a scene document; a bare name such as ``default`` resolves to ``data/scenes/<name>.scene.json``."""

    scene_path = Path(path)
    if not scene_path.exists() and not scene_path.suffix:
        scene_path = SCENES_DIR / f"{path}.scene.json"
    try:
        data = json.loads(scene_path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise SceneError(f"Файл сцены не найден: {scene_path}") from exc
    except json.JSONDecodeError as exc:
        raise SceneError(f"Некорректный JSON в {scene_path}: {exc}") from exc
    return scene_from_mapping(data, seed=seed, num_frames=num_frames)
