"""
3D Motion Trail Model Tests

Compares compute_mtm against a naive per-frame, per-pixel reference and
checks the history-image properties (value range, recency ordering).
"""

import numpy as np
import pytest

from depth_io import DepthFrame, DepthSequence
from errors import DepthOutOfRange, EmptyInput, ShapeMismatch
from mtm import (
    compute_mtm,
    crop_and_resize,
    fold_history,
    history_to_pgm,
    motion_update,
    project_frame,
    static_update,
    write_history_pgm,
)
from schemas import MtmConfig, TemplateConfig


# ============================================================================
# Naive Reference
# ============================================================================

def naive_projections(frame, z_range, z_bins):
    height, width = frame.shape
    z_min, z_max = z_range
    span = max(z_max - z_min, 1)
    side = np.zeros((z_bins, height))
    top = np.zeros((width, z_bins))
    for y in range(height):
        for x in range(width):
            d = int(frame[y, x])
            if d == 0:
                continue
            z = int(np.floor((d - z_min) * z_bins / span))
            z = min(max(z, 0), z_bins - 1)
            side[z, y] = 1.0
            top[x, z] = 1.0
    return {"xOy": frame.astype(float), "yOz": side, "xOz": top}


def naive_fold(views, horizon, kind, threshold):
    history = np.zeros_like(views[0], dtype=float)
    for prev, cur in zip(views[:-1], views[1:]):
        for index in np.ndindex(history.shape):
            diff = abs(cur[index] - prev[index])
            fires = diff > threshold if kind == "MHI" else cur[index] - diff > threshold
            history[index] = horizon if fires else max(history[index] - 1, 0)
    return history


def naive_mtm(depth, cfg):
    nonzero = depth[depth > 0]
    z_range = (int(nonzero.min()), int(nonzero.max())) if nonzero.size else (0, 1)
    per_frame = [naive_projections(frame, z_range, cfg.z_bins) for frame in depth]
    out = {}
    for plane in ("xOy", "yOz", "xOz"):
        views = [p[plane] for p in per_frame]
        zeta_m = cfg.zeta_m if plane == "xOy" else cfg.zeta_m_occupancy
        zeta_s = cfg.zeta_s if plane == "xOy" else cfg.zeta_s_occupancy
        out[("MHI", plane)] = naive_fold(views, len(depth), "MHI", zeta_m)
        out[("SHI", plane)] = naive_fold(views, len(depth), "SHI", zeta_s)
    return out


def random_blob_sequence(rng, frames=6, height=10, width=9):
    depth = np.zeros((frames, height, width), dtype=np.int64)
    for t in range(frames):
        y0, x0 = rng.integers(0, height - 3), rng.integers(0, width - 3)
        depth[t, y0 : y0 + 4, x0 : x0 + 3] = rng.integers(1500, 1600)
        depth[t][rng.random((height, width)) < 0.1] = rng.integers(1000, 2500)
    return DepthSequence.from_array(depth, 1, 1, 1)


# ============================================================================
# Test 1: Update Functions
# ============================================================================

def test_motion_update_threshold_is_strict():
    prev = np.array([[100.0, 100.0]])
    cur = np.array([[110.0, 111.0]])
    np.testing.assert_array_equal(motion_update(prev, cur, 10), [[0, 1]])


def test_static_update_marks_present_still_pixels():
    prev = np.array([[0.0, 2000.0, 2000.0]])
    cur = np.array([[0.0, 2000.0, 3000.0]])
    np.testing.assert_array_equal(static_update(prev, cur, 10), [[0, 1, 1]])
    np.testing.assert_array_equal(static_update(prev, cur, 1500), [[0, 1, 0]])


def test_update_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        motion_update(np.zeros((2, 2)), np.zeros((2, 3)), 1)


# ============================================================================
# Test 2: History Folding
# ============================================================================

def test_fold_single_firing_pixel():
    """T=3: a pixel fires only at the first step -> T, then T - 1."""
    maps = [np.array([[1, 0]]), np.array([[0, 0]])]
    np.testing.assert_array_equal(fold_history(maps, 3).values, [[2, 0]])


def test_fold_last_step_gives_horizon():
    maps = [np.array([[1, 0]]), np.array([[0, 1]])]
    np.testing.assert_array_equal(fold_history(maps, 3).values, [[2, 3]])


def test_fold_matches_sequential_update():
    rng = np.random.default_rng(3)
    maps = [rng.random((5, 4)) < 0.3 for _ in range(7)]
    history = np.zeros((5, 4))
    for update in maps:
        history = np.where(update, 8, np.maximum(history - 1, 0))
    np.testing.assert_array_equal(fold_history([m.astype(np.uint8) for m in maps], 8).values, history)


def test_fold_rejects_empty_and_wrong_count():
    with pytest.raises(EmptyInput):
        fold_history([], 2)
    with pytest.raises(ShapeMismatch):
        fold_history([np.zeros((2, 2))], 4)


# ============================================================================
# Test 3: Projections
# ============================================================================

def test_project_frame_occupancy():
    depth = np.array([[0, 1000], [2000, 0]], dtype=np.uint16)
    triple = project_frame(DepthFrame(depth), MtmConfig(z_bins=4), z_range=(1000, 2000))
    assert triple.side.shape == (4, 2)
    assert triple.top.shape == (2, 4)
    assert triple.side[0, 0] == 1 and triple.side[3, 1] == 1
    assert triple.top[1, 0] == 1 and triple.top[0, 3] == 1
    assert triple.side.sum() == 2 and triple.top.sum() == 2


def test_project_frame_explicit_range_violation():
    depth = np.array([[500, 3000]], dtype=np.uint16)
    with pytest.raises(DepthOutOfRange):
        project_frame(DepthFrame(depth), MtmConfig(z_range=(1000, 2000)))


# ============================================================================
# Test 4: Whole-Sequence MTM
# ============================================================================

def test_constant_sequence_has_zero_mhi_and_full_shi():
    depth = np.zeros((5, 6, 6), dtype=np.int64)
    depth[:, 2:5, 1:4] = 2000
    output = compute_mtm(DepthSequence.from_array(depth), MtmConfig())
    for mhi in output.mhi:
        assert not mhi.values.any()
    silhouette = depth[0] > 0
    np.testing.assert_array_equal(output.shi[0].values, np.where(silhouette, 5, 0))


def test_compute_mtm_matches_naive_reference():
    rng = np.random.default_rng(11)
    cfg = MtmConfig(z_bins=8)
    for _ in range(20):
        seq = random_blob_sequence(rng)
        output = compute_mtm(seq, cfg)
        expected = naive_mtm(seq.depth.astype(np.int64), cfg)
        for history in output.images():
            np.testing.assert_array_equal(history.values, expected[(history.kind, history.plane)])


def test_history_values_stay_in_range():
    rng = np.random.default_rng(5)
    seq = random_blob_sequence(rng, frames=9)
    for history in compute_mtm(seq, MtmConfig(z_bins=16)).images():
        assert history.values.min() >= 0
        assert history.values.max() <= seq.length


def test_recent_motion_is_brighter():
    """A blob that moves once early and once late leaves a brighter trail at the late spot."""
    depth = np.zeros((6, 4, 12), dtype=np.int64)
    depth[:2, 1:3, 0:2] = 2000
    depth[2:5, 1:3, 4:6] = 2000
    depth[5:, 1:3, 8:10] = 2000
    mhi = compute_mtm(DepthSequence.from_array(depth), MtmConfig()).mhi[0].values
    assert mhi[1, 8] > mhi[1, 0] > 0


def test_time_reversal_changes_motion_history():
    depth = np.zeros((6, 4, 12), dtype=np.int64)
    depth[:2, 1:3, 0:2] = 2000
    depth[2:5, 1:3, 4:6] = 2000
    depth[5:, 1:3, 8:10] = 2000
    forward = compute_mtm(DepthSequence.from_array(depth), MtmConfig()).mhi[0].values
    backward = compute_mtm(DepthSequence.from_array(depth[::-1].copy()), MtmConfig()).mhi[0].values
    assert not np.array_equal(forward, backward)
    assert backward[1, 0] > backward[1, 8] > 0


# ============================================================================
# Test 5: Templates and PGM Dump
# ============================================================================

def test_crop_and_resize_keeps_corners():
    gray = np.zeros((10, 10))
    gray[2:5, 3:7] = np.arange(12).reshape(3, 4)
    resized = crop_and_resize(gray, (8, 8))
    assert resized.shape == (8, 8)
    assert resized[0, 0] == pytest.approx(0.0)
    assert resized[-1, -1] == pytest.approx(11.0)


def test_crop_and_resize_blank_image():
    np.testing.assert_array_equal(crop_and_resize(np.zeros((5, 5)), (4, 6)), np.zeros((4, 6)))


def test_template_config_size():
    assert TemplateConfig(height=32, width=48).size == (32, 48)


def test_pgm_dump(tmp_path):
    depth = np.zeros((4, 3, 3), dtype=np.int64)
    depth[:, 1, 1] = 1500
    output = compute_mtm(DepthSequence.from_array(depth, 1, 2, 3), MtmConfig())
    paths = write_history_pgm(output, tmp_path, "a02_s01_e03")
    assert [p.name for p in paths][:2] == ["a02_s01_e03_xOy_MHI.pgm", "a02_s01_e03_yOz_MHI.pgm"]
    assert len(paths) == 6
    header = b"P5\n3 3\n255\n"
    data = history_to_pgm(output.shi[0])
    assert data.startswith(header)
    pixels = np.frombuffer(data[len(header):], dtype=np.uint8).reshape(3, 3)
    assert pixels[1, 1] == 255 and pixels[0, 0] == 0
    assert set(history_to_pgm(output.mhi[0])[len(header):]) == {0}
