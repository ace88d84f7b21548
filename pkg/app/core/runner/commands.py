"""Команды CLI: mosaic, synth, eval и match-dump.

Every command returns a process exit status; library errors are caught here,
logged and turned into a nonzero code.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np
from PIL import Image

from app.core.config.config import Config, ConfigError, EffectiveParams, resolve_scaled_params
from app.core.features.detector import FeatureFormatError, MatchPair, detect_and_match
from app.core.features.io import MatchFileError, load_manifest, load_matches, save_matches
from app.core.fieldest.estimator import estimate_field
from app.core.frames.io import FrameReadError, list_frames, load_frame, save_png
from app.core.mosaic.blending import blend_frame, render_overlay
from app.core.mosaic.canvas import Canvas
from app.core.slam.graph import FrameStatus
from app.core.slam.pipeline import FrameResult, SlamPipeline
from app.core.synth.evaluation import evaluate, label_matches
from app.core.synth.generator import generate, save_sequence
from app.core.synth.scene import SceneError, SyntheticScene, load_scene
from app.system.logs.logger import get_logger
from app.system.parallel.workers import resolve_worker_count

LOGGER = get_logger("runner")

EXIT_OK = 0
EXIT_FAILURE = 1

STATS_FILE = "stats.jsonl"
MOSAIC_FILE = "mosaic.png"
MOSAIC_META_FILE = "mosaic.json"
TRAJECTORIES_FILE = "trajectories.json"
REPORT_FILE = "report.json"
LABEL_STRIDE = 10


@dataclass
class TrajectoryLog:
    """Node positions per frame; nodes are appended over time, so earlier rows are shorter."""

    frames: List[Tuple[int, str, np.ndarray]] = field(default_factory=list)

    def record(self, frame_index: int, status: FrameStatus, positions: np.ndarray) -> None:
        self.frames.append((int(frame_index), status.value, np.array(positions, dtype=np.float64)))

    def to_mapping(self, anchors: np.ndarray) -> Dict[str, Any]:
        total = int(anchors.shape[0])
        entries = []
        for frame_index, status, positions in self.frames:
            rows: List[Optional[List[float]]] = [[float(x), float(y)] for x, y in positions]
            rows.extend([None] * (total - len(rows)))
            entries.append({"frame": frame_index, "status": status, "positions": rows})
        return {"anchors": [[float(x), float(y)] for x, y in anchors], "frames": entries}


@dataclass
class MosaicRun:
    """Online mosaicking state: one frame is fully processed before the next is read."""

    config: Config
    output_dir: Path
    overlay: bool = False
    snapshots: bool = False
    workers: int = 1
    tracking_files: Dict[int, Path] = field(default_factory=dict)
    params: Optional[EffectiveParams] = None
    pipeline: Optional[SlamPipeline] = None
    canvas: Optional[Canvas] = None
    trajectories: TrajectoryLog = field(default_factory=TrajectoryLog)
    processed: int = 0
    skipped: int = 0

    def _begin(self, frame: np.ndarray) -> None:
        height, width = frame.shape[:2]
        self.params = resolve_scaled_params(self.config, width, height)
        self.pipeline = SlamPipeline(self.params.slam)
        self.canvas = Canvas(tile_size=self.config.tile_size, weight_cap=self.config.weight_cap)
        LOGGER.info(
            "Кадры %dx%d: масштаб параметров s=%.5f, α=%.3g, шаг узлов %.1f px, потоков %d",
            width,
            height,
            self.params.scale,
            self.params.config.alpha,
            self.params.config.hex_spacing,
            self.workers,
        )

    def _tracking_matches(self, frame_index: int) -> Optional[List[MatchPair]]:
        path = self.tracking_files.get(frame_index)
        return load_matches(path) if path is not None else None

    def step(self, frame_index: int, frame: np.ndarray) -> Dict[str, Any]:
        if self.pipeline is None:
            self._begin(frame)
        assert self.pipeline is not None and self.canvas is not None and self.params is not None
        result: FrameResult = self.pipeline.process_frame(frame_index, frame, self._tracking_matches(frame_index))
        self.processed += 1

        blended: Optional[Dict[str, int]] = None
        due = result.status is FrameStatus.REFERENCE or frame_index % self.config.blend_stride == 0
        if result.status is not FrameStatus.LOST and due:
            start = time.perf_counter()
            blended = blend_frame(self.canvas, frame, self.pipeline.graph, self.params.blend, self.workers).to_dict()
            result.timings["blend"] = (time.perf_counter() - start) * 1000.0

        graph = self.pipeline.graph
        self.trajectories.record(frame_index, result.status, graph.positions)
        if self.overlay:
            save_png(self.output_dir / "overlays" / f"frame_{frame_index:04d}.png", render_overlay(frame, graph))
        if self.snapshots:
            snapshot_path = self.output_dir / "snapshots" / f"frame_{frame_index:04d}.json"
            snapshot_path.parent.mkdir(parents=True, exist_ok=True)
            snapshot_path.write_text(json.dumps(self.pipeline.snapshot(frame_index)), encoding="utf-8")

        stats = result.to_stats()
        stats["blend"] = blended
        LOGGER.debug("Кадр %d: %s", frame_index, stats)
        return stats

    def finish(self) -> None:
        assert self.pipeline is not None and self.canvas is not None and self.params is not None
        save_png(self.output_dir / MOSAIC_FILE, self.canvas.to_rgba())
        meta = self.canvas.metadata()
        meta["frames"] = self.processed
        meta["skipped"] = self.skipped
        meta["scale"] = self.params.scale
        meta["effective_config"] = self.params.config.to_mapping()
        (self.output_dir / MOSAIC_META_FILE).write_text(json.dumps(meta, indent=2), encoding="utf-8")
        trajectories = self.trajectories.to_mapping(self.pipeline.graph.anchors)
        (self.output_dir / TRAJECTORIES_FILE).write_text(json.dumps(trajectories), encoding="utf-8")


def _write_stats_line(handle: TextIO, stats: Dict[str, Any]) -> None:
    handle.write(json.dumps(stats, sort_keys=True) + "\n")
    handle.flush()


def run_mosaic(
    input_dir: str | Path,
    config: Config,
    output_dir: str | Path,
    *,
    overlay: bool = False,
    snapshots: bool = False,
    matches_manifest: str | Path | None = None,
) -> int:
    """Build a mosaic from a frame directory and write it with per-frame stats."""

    out = Path(output_dir)
    try:
        frames = list_frames(input_dir)
        tracking_files = load_manifest(matches_manifest) if matches_manifest is not None else {}
    except (FrameReadError, MatchFileError) as exc:
        LOGGER.error("%s", exc)
        return EXIT_FAILURE
    if not frames:
        LOGGER.error("В каталоге %s нет кадров", input_dir)
        return EXIT_FAILURE

    out.mkdir(parents=True, exist_ok=True)
    run = MosaicRun(
        config=config,
        output_dir=out,
        overlay=overlay,
        snapshots=snapshots,
        workers=resolve_worker_count(config.workers),
        tracking_files=tracking_files,
    )
    shape: Optional[Tuple[int, ...]] = None
    started = time.perf_counter()
    with (out / STATS_FILE).open("w", encoding="utf-8") as stats_handle:
        for frame_index, path in enumerate(frames):
            try:
                frame = load_frame(path)
            except FrameReadError as exc:
                LOGGER.warning("Кадр %d пропущен: %s", frame_index, exc)
                run.skipped += 1
                continue
            if shape is not None and frame.shape != shape:
                LOGGER.warning("Кадр %d пропущен: размер %s вместо %s", frame_index, frame.shape, shape)
                run.skipped += 1
                continue
            shape = frame.shape
            try:
                stats = run.step(frame_index, frame)
            except (MatchFileError, FeatureFormatError) as exc:
                LOGGER.error("Кадр %d: %s", frame_index, exc)
                return EXIT_FAILURE
            _write_stats_line(stats_handle, stats)

    if run.processed == 0:
        LOGGER.error("Не удалось прочитать ни одного кадра из %s", input_dir)
        return EXIT_FAILURE
    if run.processed < 2:
        LOGGER.warning("Обработан только один кадр; мозаика совпадает с ним")
    run.finish()
    elapsed = time.perf_counter() - started
    LOGGER.info(
        "Готово: кадров %d (пропущено %d), %.1f кадр/с, результат в %s",
        run.processed,
        run.skipped,
        run.processed / max(elapsed, 1e-9),
        out,
    )
    return EXIT_OK


def run_synth(
    scene_ref: str | Path,
    output_dir: str | Path,
    *,
    seed: Optional[int] = None,
    num_frames: Optional[int] = None,
    workers: int = 0,
) -> int:
    try:
        scene = load_scene(scene_ref, seed=seed, num_frames=num_frames)
        sequence = generate(scene, workers=resolve_worker_count(workers))
    except SceneError as exc:
        LOGGER.error("%s", exc)
        return EXIT_FAILURE
    root = save_sequence(sequence, output_dir)
    LOGGER.info("Синтетическая последовательность записана в %s", root)
    return EXIT_OK


def _load_mosaic(run_dir: Path) -> Tuple[Optional[np.ndarray], Optional[np.ndarray], Sequence[int]]:
    mosaic_path = run_dir / MOSAIC_FILE
    meta_path = run_dir / MOSAIC_META_FILE
    if not mosaic_path.exists() or not meta_path.exists():
        return None, None, (0, 0)
    with Image.open(mosaic_path) as image:
        rgba = np.asarray(image.convert("RGBA"), dtype=np.uint8)
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    return rgba[..., :3], rgba[..., 3] > 0, meta.get("origin", [0, 0])


def label_sequence(
    scene: SyntheticScene,
    frames_dir: str | Path,
    anchors: np.ndarray,
    config: Config,
    stride: int = LABEL_STRIDE,
) -> Tuple[np.ndarray, np.ndarray]:
    """Pooled ``(predicted, truth)`` inlier flags over frame pairs ``(t - 1, t)`` every ``stride`` frames."""

    paths = list_frames(frames_dir)
    if len(paths) < 2 or anchors.shape[0] == 0:
        return np.zeros(0, dtype=bool), np.zeros(0, dtype=bool)
    first = load_frame(paths[0])
    params = resolve_scaled_params(config, first.shape[1], first.shape[0]).slam
    predicted: List[np.ndarray] = []
    truth: List[np.ndarray] = []
    for t in range(1, len(paths), max(1, stride)):
        matches = detect_and_match(load_frame(paths[t - 1]), load_frame(paths[t]), params.detector)
        estimate = estimate_field(matches, anchors, params.estimator)
        if not estimate.ok:
            continue
        predicted.append(estimate.inlier_flags)
        truth.append(label_matches(scene, matches, t - 1, t))
    if not predicted:
        return np.zeros(0, dtype=bool), np.zeros(0, dtype=bool)
    return np.concatenate(predicted), np.concatenate(truth)


def run_eval(
    scene_ref: str | Path,
    run_dir: str | Path,
    output: str | Path | None = None,
    *,
    frames_dir: str | Path | None = None,
    config: Optional[Config] = None,
    seed: Optional[int] = None,
) -> int:
    """Score a mosaic run against the ground truth of a synthetic scene; writes ``report.json``."""

    run_path = Path(run_dir)
    try:
        scene = load_scene(scene_ref, seed=seed)
        trajectories = json.loads((run_path / TRAJECTORIES_FILE).read_text(encoding="utf-8"))
    except SceneError as exc:
        LOGGER.error("%s", exc)
        return EXIT_FAILURE
    except FileNotFoundError:
        LOGGER.error("Не найден %s в %s", TRAJECTORIES_FILE, run_path)
        return EXIT_FAILURE
    except json.JSONDecodeError as exc:
        LOGGER.error("Некорректный %s: %s", TRAJECTORIES_FILE, exc)
        return EXIT_FAILURE

    mosaic, mask, origin = _load_mosaic(run_path)
    labels = None
    if frames_dir is not None:
        anchors = np.asarray(trajectories.get("anchors", []), dtype=np.float64).reshape(-1, 2)
        try:
            labels = label_sequence(scene, frames_dir, anchors, config or Config())
        except FrameReadError as exc:
            LOGGER.error("%s", exc)
            return EXIT_FAILURE

    report = evaluate(trajectories, scene, mosaic, mask, origin, labels)
    target = Path(output) if output is not None else run_path / REPORT_FILE
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    LOGGER.info(
        "Оценка: node_rmse=%.3f px, mosaic_rmse=%.4f, drift=%.3f px -> %s",
        report.node_rmse,
        report.mosaic_rmse,
        report.drift,
        target,
    )
    return EXIT_OK


def match_dump(image_a: str | Path, image_b: str | Path, output: str | Path, config: Config) -> int:
    """Detect and match two frames and write the result as a match file."""

    try:
        frame_a = load_frame(image_a)
        frame_b = load_frame(image_b)
        params = resolve_scaled_params(config, frame_a.shape[1], frame_a.shape[0]).slam
        matches = detect_and_match(frame_a, frame_b, params.detector, resolve_worker_count(config.workers))
    except (FrameReadError, FeatureFormatError, ConfigError) as exc:
        LOGGER.error("%s", exc)
        return EXIT_FAILURE
    save_matches(output, matches)
    LOGGER.info("Сопоставлений: %d -> %s", len(matches), output)
    return EXIT_OK
