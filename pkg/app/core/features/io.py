"""Match files: one ``ax ay bx by score`` line per match, ``#`` starts a comment line."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Iterable, List

from app.core.features.detector import MatchPair

MATCH_FILE_HEADER = "# ax ay bx by score"


class MatchFileError(ValueError):
    """Raised for malformed match files and manifests."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


def save_matches(path: str | Path, matches: Iterable[MatchPair]) -> Path:
    """Write matches with ``repr`` floats so that loading restores them bit for bit."""

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    lines = [MATCH_FILE_HEADER]
    for match in matches:
        ax, ay = match.point_a
        bx, by = match.point_b
        lines.append(f"{float(ax)!r} {float(ay)!r} {float(bx)!r} {float(by)!r} {float(match.score)!r}")
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return target


def load_matches(path: str | Path) -> List[MatchPair]:
    source = Path(path)
    try:
        text = source.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise MatchFileError(f"Файл сопоставлений не найден: {source}") from exc

    matches: List[MatchPair] = []
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 5:
            raise MatchFileError(
                f"{source}:{line_number}: ожидалось 5 полей (ax ay bx by score), получено {len(fields)}",
                line_number,
            )
        try:
            ax, ay, bx, by, score = (float(value) for value in fields)
        except ValueError as exc:
            raise MatchFileError(f"{source}:{line_number}: некорректное число ({exc})", line_number) from exc
        matches.append(MatchPair(point_a=(ax, ay), point_b=(bx, by), score=score))
    return matches


def load_manifest(path: str | Path) -> Dict[int, Path]:
    """Tracking manifest ``{"tracking": {"<t>": "file"}}``: matches from frame t-1 to frame t.

    Relative file names are resolved against the manifest's directory.
    """

    manifest_path = Path(path)
    try:
        payload = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise MatchFileError(f"Манифест не найден: {manifest_path}") from exc
    except json.JSONDecodeError as exc:
        raise MatchFileError(f"Некорректный JSON в {manifest_path}: {exc}") from exc

    tracking = payload.get("tracking") if isinstance(payload, dict) else None
    if not isinstance(tracking, dict):
        raise MatchFileError(f"В манифесте {manifest_path} отсутствует объект tracking")
    result: Dict[int, Path] = {}
    for key, value in tracking.items():
        try:
            frame_index = int(key)
        except ValueError as exc:
            raise MatchFileError(f"Некорректный номер кадра в манифесте: {key!r}") from exc
        file_path = Path(str(value))
        if not file_path.is_absolute():
            file_path = manifest_path.parent / file_path
        result[frame_index] = file_path
    return result
