"""Мозаика: холст и смешивание кадров."""
from app.core.mosaic.blending import BlendParams, BlendStats, blend_frame, pixel_warp, render_overlay
from app.core.mosaic.canvas import Canvas, render

__all__ = ["BlendParams", "BlendStats", "Canvas", "blend_frame", "pixel_warp", "render", "render_overlay"]
