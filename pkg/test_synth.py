"""
Synthetic Dataset Tests
"""

import numpy as np
import pytest

from depth_io import load_dataset
from mtm import compute_mtm
from schemas import MtmConfig, SynthSpec
from synth import PROGRAMS, generate, render_sequence, write_dataset


# ============================================================================
# Test 1: Dataset Layout
# ============================================================================

def test_dataset_size_and_ids():
    spec = SynthSpec(subjects=2, trials=3)
    dataset = generate(spec)
    assert len(dataset) == 3 * 2 * 3
    assert dataset[0].seq_id == "a01_s01_e01"
    assert {seq.action_id for seq in dataset} == {1, 2, 3}
    assert all(seq.depth.shape == (16, 32, 32) for seq in dataset)


def test_generation_is_deterministic():
    spec = SynthSpec(subjects=2, trials=2, noise=20, seed=5)
    first, second = generate(spec), generate(spec)
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.depth, b.depth)


@pytest.mark.parametrize("program", sorted(PROGRAMS))
def test_every_program_renders_a_valid_sequence(program):
    seq = render_sequence(SynthSpec(), program, 1, 2, 3)
    assert seq.length == 16
    assert seq.depth.max() > 0
    assert seq.depth.min() == 0


def test_unknown_program_rejected():
    with pytest.raises(ValueError):
        SynthSpec(classes=("translate_right", "cartwheel"))


def test_written_dataset_loads_back(tmp_path):
    dataset = generate(SynthSpec(subjects=1, trials=2))
    write_dataset(dataset, tmp_path)
    loaded = load_dataset(tmp_path)
    assert [seq.seq_id for seq in loaded] == sorted(seq.seq_id for seq in dataset)


# ============================================================================
# Test 2: Motion Semantics
# ============================================================================

def test_static_performer_has_no_motion_history():
    seq = render_sequence(SynthSpec(), "static", 1, 1, 1)
    output = compute_mtm(seq, MtmConfig())
    for image in output.mhi:
        assert not image.values.any()
    front = output.shi[0].values
    silhouette = seq.depth[0] > 0
    np.testing.assert_array_equal(front[silhouette], seq.length)
    assert not front[~silhouette].any()


def test_left_translation_mirrors_right_translation():
    spec = SynthSpec()
    right = compute_mtm(render_sequence(spec, "translate_right", 1, 2, 2), MtmConfig())
    left = compute_mtm(render_sequence(spec, "translate_left", 2, 2, 2), MtmConfig())
    np.testing.assert_array_equal(left.mhi[0].values, right.mhi[0].values[:, ::-1])
    assert right.mhi[0].values.any()


def test_noise_is_seeded_and_keeps_foreground():
    clean = render_sequence(SynthSpec(), "oscillate", 3, 1, 1).depth
    noisy_spec = SynthSpec(noise=30, seed=11)
    noisy = render_sequence(noisy_spec, "oscillate", 3, 1, 1).depth
    again = render_sequence(noisy_spec, "oscillate", 3, 1, 1).depth
    np.testing.assert_array_equal(noisy, again)
    foreground = clean > 0
    assert (noisy[foreground] >= 1).all()
    assert not noisy[~foreground].any()
    assert np.abs(noisy.astype(int) - clean.astype(int)).max() <= 30
    other = render_sequence(SynthSpec(noise=30, seed=12), "oscillate", 3, 1, 1).depth
    assert not np.array_equal(noisy, other)
