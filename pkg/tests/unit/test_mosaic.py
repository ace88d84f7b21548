"""Юнит-тесты холста мозаики и смешивания кадров."""
import numpy as np
import pytest
from scipy.spatial import cKDTree

from app.core.dq import NoSupportError, algebra
from app.core.mosaic import BlendParams, Canvas, blend_frame, pixel_warp, render, render_overlay
from app.core.mosaic.blending import tile_warps
from app.core.slam.graph import NodeGraph, nearby_nodes
from app.core.slam.nodes import CoverageRegion, insert_nodes


def _graph(width: int, height: int, shift=(0.0, 0.0)) -> NodeGraph:
    graph = NodeGraph(hex_spacing=40.0)
    insert_nodes(graph, CoverageRegion.from_rectangle(0, 0, width, height))
    count = len(graph)
    dqs = np.tile(algebra.from_translation(np.asarray(shift, dtype=float)), (count, 1))
    graph.set_state(np.ones(count), dqs, graph.variances)
    return graph


def _frame(texture: np.ndarray, width: int = 160, height: int = 120, x: int = 0) -> np.ndarray:
    return np.ascontiguousarray(texture[:height, x : x + width])


def test_canvas_grows_in_whole_tiles() -> None:
    canvas = Canvas(tile_size=256)
    assert canvas.ensure_contains(0, 0, 100, 100)
    assert canvas.shape == (256, 256)
    canvas.update(np.array([5]), np.array([7]), np.array([[10.0, 20.0, 30.0]]))
    assert canvas.ensure_contains(-10, -300, 100, 100)
    assert canvas.shape == (256 * 3, 256 * 2)
    np.testing.assert_array_equal(canvas.origin_offset, [-256, -512])
    assert canvas.merge_weight[512 + 5, 256 + 7] == 1
    np.testing.assert_allclose(canvas.color_accum[512 + 5, 256 + 7], [10.0, 20.0, 30.0])
    assert not canvas.ensure_contains(0, 0, 10, 10)


def test_running_average_with_weight_cap() -> None:
    canvas = Canvas(tile_size=16, weight_cap=3)
    canvas.ensure_contains(0, 0, 1, 1)
    rows, cols = np.array([0]), np.array([0])
    canvas.update(rows, cols, np.array([[10.0, 10.0, 10.0]]))
    canvas.update(rows, cols, np.array([[20.0, 20.0, 20.0]]))
    np.testing.assert_allclose(canvas.color_accum[0, 0], 15.0)
    for _ in range(5):
        canvas.update(rows, cols, np.array([[15.0, 15.0, 15.0]]))
    assert canvas.merge_weight[0, 0] == 3
    canvas.update(rows, cols, np.array([[55.0, 55.0, 55.0]]))
    np.testing.assert_allclose(canvas.color_accum[0, 0], (3 * 15.0 + 55.0) / 4)


def test_empty_canvas_renders_nothing() -> None:
    rgb, mask = render(Canvas())
    assert rgb.shape == (0, 0, 3)
    assert mask.shape == (0, 0)


def test_identity_blend_reproduces_frame(texture: np.ndarray) -> None:
    frame = _frame(texture)
    canvas = Canvas(tile_size=64)
    stats = blend_frame(canvas, frame, _graph(160, 120), BlendParams())
    assert stats.blended == 160 * 120
    assert stats.unsupported == 0
    rgb, mask = canvas.render()
    assert mask.all()
    np.testing.assert_array_equal(rgb, frame)
    meta = canvas.metadata()
    assert meta["origin"] == [0, 0]
    assert (meta["width"], meta["height"]) == (160, 120)
    assert canvas.to_rgba().shape == (120, 160, 4)


def test_repeated_frame_keeps_colours(texture: np.ndarray) -> None:
    frame = _frame(texture)
    graph = _graph(160, 120)
    canvas = Canvas(tile_size=64)
    blend_frame(canvas, frame, graph, BlendParams())
    blend_frame(canvas, frame, graph, BlendParams())
    rgb, _ = canvas.render()
    np.testing.assert_array_equal(rgb, frame)
    assert canvas.merge_weight.max() == 2


def test_translated_nodes_shift_the_sampling(texture: np.ndarray) -> None:
    """Узлы сдвинуты на (10, 0): пиксель x0 холста берётся из x0 + 10 кадра."""
    frame = _frame(texture, x=10)
    canvas = Canvas(tile_size=64)
    blend_frame(canvas, frame, _graph(160, 120, shift=(-10.0, 0.0)), BlendParams())
    rgb, mask = canvas.render(crop=False)
    row0 = -int(canvas.origin_offset[1])
    col0 = -int(canvas.origin_offset[0])
    # reference x in [10, 170) is seen by frame pixels [0, 160)
    np.testing.assert_array_equal(rgb[row0 : row0 + 120, col0 + 10 : col0 + 170], texture[:120, 10:170])
    assert mask[row0 : row0 + 120, col0 + 10 : col0 + 170].all()
    assert not mask[row0 : row0 + 120, col0 : col0 + 9].any()


def test_worker_count_does_not_change_result(texture: np.ndarray) -> None:
    frame = _frame(texture)
    graph = _graph(160, 120, shift=(2.5, -1.25))
    single, pooled = Canvas(tile_size=64), Canvas(tile_size=64)
    params = BlendParams(band_height=16)
    blend_frame(single, frame, graph, params, workers=1)
    blend_frame(pooled, frame, graph, params, workers=4)
    np.testing.assert_array_equal(single.color_accum, pooled.color_accum)
    np.testing.assert_array_equal(single.merge_weight, pooled.merge_weight)


def test_pixel_warp_needs_support() -> None:
    graph = _graph(160, 120)
    np.testing.assert_allclose(pixel_warp((50.0, 50.0), graph, 2e-4)((50.0, 50.0)), [50.0, 50.0])
    with pytest.raises(NoSupportError):
        pixel_warp((1e5, 1e5), graph, 2e-4)


def test_overlay_keeps_frame_shape(texture: np.ndarray) -> None:
    frame = _frame(texture)
    overlay = render_overlay(frame, _graph(160, 120))
    assert overlay.shape == frame.shape
    assert overlay.dtype == np.uint8
    assert not np.array_equal(overlay, frame)


def _wavy_graph(width: int, height: int) -> NodeGraph:
    graph = NodeGraph(hex_spacing=60.0)
    insert_nodes(graph, CoverageRegion.from_rectangle(0, 0, width, height))
    anchors = graph.anchors
    shifts = np.stack([8.0 * np.sin(anchors[:, 0] / 90.0), 5.0 * np.cos(anchors[:, 1] / 70.0)], axis=1)
    angles = 0.05 * np.sin(anchors[:, 0] / 200.0)
    graph.set_state(np.full(len(graph), 1.02), algebra.from_rigid(angles, shifts), graph.variances)
    return graph


def test_far_nodes_are_pruned_but_nearest_kept() -> None:
    graph = _wavy_graph(1200, 300)
    tree = cKDTree(graph.anchors)
    center = np.array([32.0, 150.0])
    subset = nearby_nodes(tree, center, 45.0, 2e-4)
    assert 0 < subset.size < len(graph)
    _, nearest = tree.query(center)
    assert nearest in subset
    assert np.all(np.diff(subset) > 0)


def test_tiled_warps_match_dense_evaluation() -> None:
    """Отсечение далёких узлов по плиткам почти не меняет смешанные деформации."""
    graph = _wavy_graph(1200, 300)
    xs, ys = np.meshgrid(np.arange(-40.0, 1240.0, 7.0), np.arange(-20.0, 320.0, 9.0))
    points = np.stack([xs.ravel(), ys.ravel()], axis=1)
    tiles = (points[:, 0] // 64).astype(np.int64) * 1000 + (points[:, 1] // 64).astype(np.int64)
    scales, dqs, supported = tile_warps(points, graph, cKDTree(graph.anchors), 2e-4, tiles)
    dense_scales, dense_dqs, dense_supported = graph.pixel_warps(points, 2e-4)
    np.testing.assert_array_equal(supported, dense_supported)
    np.testing.assert_allclose(scales, dense_scales, atol=1e-4)
    np.testing.assert_allclose(
        algebra.warp_apply(scales, dqs, points), algebra.warp_apply(dense_scales, dense_dqs, points), atol=1e-2
    )


def test_covered_area_never_shrinks(texture: np.ndarray) -> None:
    frame = _frame(texture)
    canvas = Canvas(tile_size=64)
    covered = []
    for step in range(5):
        blend_frame(canvas, frame, _graph(160, 120, shift=(-12.0 * step, 4.0 * step)), BlendParams())
        covered.append(int(np.count_nonzero(canvas.merge_weight)))
    assert covered[0] > 0
    assert all(later >= earlier for earlier, later in zip(covered, covered[1:]))
    assert covered[-1] > covered[0]
