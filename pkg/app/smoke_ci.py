# app/smoke_ci.py
from __future__ import annotations
import sys, os, ast, io, json, tempfile, traceback
from typing import List, Tuple

# Абсолютный путь к корню пакета app/
APP_DIR = os.path.abspath(os.path.dirname(__file__))
REPO_ROOT = os.path.abspath(os.path.join(APP_DIR, os.pardir))
if REPO_ROOT not in sys.path:
    sys.path.insert(0, REPO_ROOT)

CORE_PACKAGES = [
    "app.core.dq",
    "app.core.features",
    "app.core.fieldest",
    "app.core.slam",
    "app.core.mosaic",
    "app.core.synth",
    "app.core.config",
    "app.core.runner",
]

DATA_FILES = [
    "data/config.schema.json",
    "data/default.config.json",
    "data/scene.schema.json",
    "data/scenes/default.scene.json",
    "data/scenes/out_and_back.scene.json",
]

SMOKE_SCENE = {
    "name": "smoke",
    "seed": 2,
    "resolution": [160, 96],
    "num_frames": 6,
    "texture": {"width": 360, "height": 220, "octaves": 4, "shapes": 40},
    "camera": {
        "waypoints": [
            {"frame": 0, "position": [120.0, 110.0]},
            {"frame": 5, "position": [140.0, 110.0]},
        ]
    },
}


def read_text(path: str) -> str:
    with io.open(path, "r", encoding="utf-8") as f:
        return f.read()


def ast_parse_ok(path: str) -> Tuple[bool, str]:
    try:
        src = read_text(path)
        ast.parse(src, filename=path)
        return True, ""
    except SyntaxError as e:
        return False, f"{path}: SyntaxError: {e}"
    except Exception as e:
        return False, f"{path}: Unexpected error: {e}"


def python_sources() -> List[str]:
    found = []
    for root, _dirs, files in os.walk(APP_DIR):
        found.extend(os.path.join(root, name) for name in files if name.endswith(".py"))
    return sorted(found)


def main() -> int:
    errors: List[str] = []

    # 1) AST-парсинг всех модулей app/
    for path in python_sources():
        ok, msg = ast_parse_ok(path)
        if not ok:
            errors.append(msg)
        elif "<<<<<<<" in read_text(path) or ">>>>>>>" in read_text(path):
            errors.append(f"{path}: merge markers detected")

    # 2) Файлы данных и схемы
    for rel in DATA_FILES:
        try:
            json.loads(read_text(os.path.join(REPO_ROOT, rel)))
        except Exception as e:
            errors.append(f"{rel}: {e}")

    # 3) Импорт ядра
    try:
        import importlib

        for name in CORE_PACKAGES:
            importlib.import_module(name)
    except Exception:
        errors.append("Import error in core packages:\n" + traceback.format_exc())
        print("SMOKE CI: FAIL")
        for e in errors:
            print(" -", e)
        return 1

    # 4) Конфигурация по умолчанию проходит схему
    try:
        from app.core.config import Config, resolve_scaled_params

        config = Config.load()
        if resolve_scaled_params(config, 480, 270).scale != 1.0:
            errors.append("Config: reference resolution must give scale 1")
    except Exception:
        errors.append("Config check failed:\n" + traceback.format_exc())
        config = None

    # 5) Мини-сценарий: synth -> mosaic -> eval
    if config is not None:
        try:
            from app.core.runner import run_eval, run_mosaic, run_synth

            with tempfile.TemporaryDirectory() as tmp:
                scene_path = os.path.join(tmp, "smoke.scene.json")
                with io.open(scene_path, "w", encoding="utf-8") as f:
                    json.dump(SMOKE_SCENE, f)
                seq = os.path.join(tmp, "seq")
                run = os.path.join(tmp, "run")
                if run_synth(scene_path, seq) != 0:
                    errors.append("synth: nonzero exit")
                elif run_mosaic(os.path.join(seq, "frames"), config, run) != 0:
                    errors.append("mosaic: nonzero exit")
                elif run_eval(os.path.join(seq, "scene.json"), run) != 0:
                    errors.append("eval: nonzero exit")
                else:
                    report = json.loads(read_text(os.path.join(run, "report.json")))
                    if report.get("frames") != SMOKE_SCENE["num_frames"]:
                        errors.append(f"eval: unexpected frame count {report.get('frames')}")
        except Exception:
            errors.append("Smoke scenario failed:\n" + traceback.format_exc())

    if errors:
        print("SMOKE CI: FAIL")
        for e in errors:
            print(" -", e)
        return 1
    print("SMOKE CI: OK")
    return 0


if __name__ == "__main__":
    sys.exit(main())
