"""Прогон сквозных критериев приёмки MosaicLab на синтетических сценах.

Результат пишется в tests/reports/acceptance.json; код возврата 0, если все
критерии выполнены.
"""
from __future__ import annotations

import argparse
import json
import sys
import tempfile
import time
from pathlib import Path
from typing import Any, Dict, List


REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from app.core.config import Config  # noqa: E402
from app.core.runner import run_eval, run_mosaic, run_synth  # noqa: E402
from app.system.logs.logger import setup_logging  # noqa: E402


REPORT_PATH = REPO_ROOT / "tests" / "reports" / "acceptance.json"
NODE_RMSE_LIMIT = 2.0
MOSAIC_RMSE_LIMIT = 10.0 / 255.0
DRIFT_LIMIT = 3.0
MIN_FPS = 5.0


def _report(run_dir: Path) -> Dict[str, Any]:
    return json.loads((run_dir / "report.json").read_text(encoding="utf-8"))


def _mosaic_run(frames: Path, config: Config, out: Path) -> float:
    started = time.perf_counter()
    if run_mosaic(frames, config, out) != 0:
        raise RuntimeError(f"mosaic завершился с ошибкой для {frames}")
    count = len((out / "stats.jsonl").read_text(encoding="utf-8").splitlines())
    return count / max(time.perf_counter() - started, 1e-9)


def _synth(scene: str, out: Path) -> Path:
    if run_synth(scene, out) != 0:
        raise RuntimeError(f"synth завершился с ошибкой для {scene}")
    return out


def check_default_scene(work: Path, workers: int) -> List[Dict[str, Any]]:
    seq = _synth("default", work / "default")
    frames = seq / "frames"
    single, pooled = work / "run_1", work / f"run_{workers}"
    fps = _mosaic_run(frames, Config(workers=1), single)
    _mosaic_run(frames, Config(workers=workers), pooled)
    run_eval(seq / "scene.json", single, frames_dir=frames)
    report = _report(single)

    same_mosaic = (single / "mosaic.png").read_bytes() == (pooled / "mosaic.png").read_bytes()
    same_tracks = (single / "trajectories.json").read_bytes() == (pooled / "trajectories.json").read_bytes()
    return [
        {
            "criterion": "end_to_end",
            "node_rmse": report["node_rmse"],
            "node_rmse_all": report["node_rmse_all"],
            "mosaic_rmse": report["mosaic_rmse"],
            "passed": report["node_rmse"] < NODE_RMSE_LIMIT and report["mosaic_rmse"] < MOSAIC_RMSE_LIMIT,
        },
        {"criterion": "throughput", "fps": fps, "passed": fps >= MIN_FPS},
        {"criterion": "determinism", "workers": [1, workers], "passed": same_mosaic and same_tracks},
    ]


def check_loop_closing(work: Path) -> Dict[str, Any]:
    seq = _synth("out_and_back", work / "out_and_back")
    frames = seq / "frames"
    drifts = {}
    for name, loop_closing in (("loop", True), ("no_loop", False)):
        out = work / f"oab_{name}"
        _mosaic_run(frames, Config(loop_closing=loop_closing), out)
        run_eval(seq / "scene.json", out)
        drifts[name] = _report(out)["drift"]
    return {
        "criterion": "loop_closing",
        "drift": drifts,
        "passed": drifts["loop"] < drifts["no_loop"] and drifts["loop"] < DRIFT_LIMIT,
    }


def main() -> int:
    parser = argparse.ArgumentParser(description="Сквозные критерии приёмки MosaicLab")
    parser.add_argument("--workers", type=int, default=8)
    parser.add_argument("--keep", help="каталог для промежуточных результатов")
    args = parser.parse_args()
    setup_logging("WARNING")

    with tempfile.TemporaryDirectory() as tmp:
        work = Path(args.keep) if args.keep else Path(tmp)
        work.mkdir(parents=True, exist_ok=True)
        results = check_default_scene(work, args.workers)
        results.append(check_loop_closing(work))

    passed = all(item["passed"] for item in results)
    REPORT_PATH.parent.mkdir(parents=True, exist_ok=True)
    REPORT_PATH.write_text(json.dumps({"passed": passed, "results": results}, indent=2), encoding="utf-8")
    for item in results:
        print(f"{item['criterion']}: {'OK' if item['passed'] else 'FAIL'}")
    print(f"Отчёт: {REPORT_PATH}")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
