"""Общие настройки тестов: корень репозитория в sys.path и тестовые изображения."""
import sys
from pathlib import Path

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from app.core.synth.scene import generate_texture  # noqa: E402


@pytest.fixture(scope="session")
def texture() -> np.ndarray:
    """Процедурная текстура 640x400 с плотными особыми точками."""
    return generate_texture(640, 400, seed=0)
