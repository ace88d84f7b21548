"""Синтетические сканы с эталонными соответствиями и оценка качества."""
from app.core.synth.corrmap import CorrMapError, read_corrmap, write_corrmap
from app.core.synth.evaluation import EvalReport, evaluate
from app.core.synth.generator import SyntheticSequence, generate, ground_truth_composite, save_sequence
from app.core.synth.scene import SceneError, SyntheticScene, load_scene, scene_from_mapping

__all__ = [
    "CorrMapError",
    "EvalReport",
    "SceneError",
    "SyntheticScene",
    "SyntheticSequence",
    "evaluate",
    "generate",
    "ground_truth_composite",
    "load_scene",
    "read_corrmap",
    "save_sequence",
    "scene_from_mapping",
    "write_corrmap",
]
