"""Точка входа MosaicLab: командная строка для мозаики, синтетики и оценки."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

# Убедимся, что корень проекта в sys.path для локального запуска
PROJECT_ROOT = Path(__file__).resolve().parent
if str(PROJECT_ROOT.parent) not in sys.path:
    sys.path.append(str(PROJECT_ROOT.parent))

from app.core.config.config import Config, ConfigError  # noqa: E402
from app.core.runner import commands  # noqa: E402
from app.system.logs.logger import get_logger, setup_logging  # noqa: E402

LOGGER = get_logger("cli")


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="JSON-файл конфигурации (по умолчанию data/default.config.json)")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="переопределить параметр"
    )
    common.add_argument("--workers", type=int, help="число потоков (0 = по числу ядер)")
    common.add_argument("--seed", type=int, help="зерно генератора случайных чисел")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--log-dir", help="каталог для файлов журнала с ротацией")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(prog="mosaiclab", description="Нежёсткая SLAM-мозаика видеопоследовательностей")
    sub = parser.add_subparsers(dest="command", required=True)

    mosaic = sub.add_parser("mosaic", parents=[common], help="построить мозаику по каталогу кадров")
    mosaic.add_argument("input", help="каталог с кадрами")
    mosaic.add_argument("-o", "--output", required=True, help="каталог результатов")
    mosaic.add_argument("--overlay", action="store_true", help="сохранять кадры с наложением узлов")
    mosaic.add_argument("--snapshots", action="store_true", help="сохранять состояние графа узлов по кадрам")
    mosaic.add_argument("--matches", help="манифест файлов сопоставлений для слежения")
    mosaic.add_argument("--no-loop", action="store_true", help="отключить замыкание петель")

    synth = sub.add_parser("synth", parents=[common], help="сгенерировать синтетическую последовательность")
    synth.add_argument("--scene", default="default", help="файл сцены или имя из data/scenes")
    synth.add_argument("--frames", type=int, help="число кадров")
    synth.add_argument("-o", "--output", required=True, help="каталог результатов")

    evaluate = sub.add_parser("eval", parents=[common], help="оценить прогон по эталону сцены")
    evaluate.add_argument("--scene", required=True, help="файл сцены (например, scene.json из synth)")
    evaluate.add_argument("--run", required=True, help="каталог результатов mosaic")
    evaluate.add_argument("--frames", help="каталог кадров для оценки разметки выбросов")
    evaluate.add_argument("-o", "--output", help="путь отчёта (по умолчанию <run>/report.json)")

    dump = sub.add_parser("match-dump", parents=[common], help="записать сопоставления двух кадров")
    dump.add_argument("image_a")
    dump.add_argument("image_b")
    dump.add_argument("-o", "--output", required=True, help="файл сопоставлений")
    return parser


def load_config(args: argparse.Namespace) -> Config:
    config = Config.load(args.config)
    loop_closing = False if getattr(args, "no_loop", False) else None
    return config.with_overrides(args.overrides, workers=args.workers, seed=args.seed, loop_closing=loop_closing)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(list(argv) if argv is not None else None)
    setup_logging(args.log_level, args.log_dir)

    try:
        config = load_config(args)
    except ConfigError as exc:
        LOGGER.error("Ошибка конфигурации: %s", exc)
        return commands.EXIT_FAILURE

    if args.command == "mosaic":
        return commands.run_mosaic(
            args.input,
            config,
            args.output,
            overlay=args.overlay,
            snapshots=args.snapshots,
            matches_manifest=args.matches,
        )
    if args.command == "synth":
        return commands.run_synth(
            args.scene, args.output, seed=args.seed, num_frames=args.frames, workers=config.workers
        )
    if args.command == "eval":
        return commands.run_eval(
            args.scene, args.run, args.output, frames_dir=args.frames, config=config, seed=args.seed
        )
    if args.command == "match-dump":
        return commands.match_dump(args.image_a, args.image_b, args.output, config)
    parser.error(f"неизвестная команда {args.command}")
    return commands.EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
