from app.core.runner.commands import match_dump, run_eval, run_mosaic, run_synth

__all__ = ["match_dump", "run_eval", "run_mosaic", "run_synth"]
