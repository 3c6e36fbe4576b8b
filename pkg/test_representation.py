"""
Action Representation Tests

Covers vector layout/dimension laws, l2 normalization, PCA retention,
orthonormality, reconstruction and the PCAM persistence format.
"""

import numpy as np
import pytest

from errors import BadMagic, DegenerateData, LengthMismatch, TruncatedStream
from mtm import compute_mtm
from representation import (
    FEATURE_SEGMENTS,
    SEGMENTS,
    assemble_vector,
    build_action_vector,
    extract_segments,
    fit_pca,
    load_pca,
    pca_from_bytes,
    pca_to_bytes,
    project_pca,
    reconstruct_pca,
    save_pca,
)
from schemas import GlacConfig, MtmConfig, SynthSpec, TemplateConfig
from synth import render_sequence


@pytest.fixture(scope="module")
def mtm_output():
    seq = render_sequence(SynthSpec(), "translate_right", 1, 1, 1)
    return compute_mtm(seq, MtmConfig())


def rank_five_data(rng, n=40, dim=30):
    """Rank-5 data whose five directions all carry well over 1% of the variance."""
    basis, _ = np.linalg.qr(rng.standard_normal((dim, 5)))
    scales = np.array([5.0, 4.0, 3.0, 2.5, 2.0])
    coords = rng.standard_normal((n, 5)) * scales
    return coords @ basis.T + rng.standard_normal(dim)


# ============================================================================
# Test 1: Action Vectors
# ============================================================================

@pytest.mark.parametrize(
    "spatial_bins, expected",
    [((1, 2), 3168), ((1, 3), 4752), ((3, 5), 23760)],
)
def test_action_vector_dimension(mtm_output, spatial_bins, expected):
    vector = build_action_vector(mtm_output, GlacConfig(spatial_bins=spatial_bins))
    assert len(vector) == expected
    assert vector.layout == SEGMENTS


def test_action_vector_is_unit_length(mtm_output):
    vector = build_action_vector(mtm_output, GlacConfig())
    assert np.linalg.norm(vector.values) == pytest.approx(1.0)


def test_action_vector_is_reproducible(mtm_output):
    first = build_action_vector(mtm_output, GlacConfig())
    second = build_action_vector(mtm_output, GlacConfig())
    assert first.values.tobytes() == second.values.tobytes()


def test_segments_follow_layout_order(mtm_output):
    cfg, template = GlacConfig(), TemplateConfig()
    segments = extract_segments(mtm_output, cfg, template)
    assert list(segments) == list(SEGMENTS)
    raw = np.concatenate([segments[name] for name in SEGMENTS])
    np.testing.assert_allclose(assemble_vector(segments), raw / np.linalg.norm(raw))


def test_half_feature_sets(mtm_output):
    segments = extract_segments(mtm_output, GlacConfig(), TemplateConfig())
    assert FEATURE_SEGMENTS["gmhi"] == SEGMENTS[:3]
    assert len(assemble_vector(segments, "gshi")) == 3 * 528


def test_zero_segments_pass_through():
    segments = {name: np.zeros(4) for name in SEGMENTS}
    np.testing.assert_array_equal(assemble_vector(segments), np.zeros(24))


# ============================================================================
# Test 2: PCA
# ============================================================================

def test_rank_five_data_keeps_five_components():
    rng = np.random.default_rng(0)
    data = rank_five_data(rng)
    model = fit_pca(data, 0.99)
    assert model.n_components == 5
    assert model.explained_ratio == pytest.approx(1.0)
    restored = reconstruct_pca(model, project_pca(model, data))
    assert np.abs(restored - data).max() <= 1e-8


def test_basis_is_orthonormal():
    rng = np.random.default_rng(1)
    model = fit_pca(rng.standard_normal((25, 12)), 0.99)
    gram = model.basis.T @ model.basis
    assert np.abs(gram - np.eye(model.n_components)).max() <= 1e-8


def test_retention_picks_minimal_k():
    rng = np.random.default_rng(2)
    data = rng.standard_normal((60, 10)) * np.linspace(10, 1, 10)
    model = fit_pca(data, 0.9)
    centered = data - data.mean(axis=0)
    eigenvalues = np.sort(np.linalg.eigvalsh(centered.T @ centered))[::-1]
    cumulative = np.cumsum(eigenvalues) / eigenvalues.sum()
    expected = int(np.argmax(cumulative >= 0.9)) + 1
    assert model.n_components == expected
    assert cumulative[expected - 2] < 0.9 <= model.explained_ratio + 1e-9


def test_variances_are_non_increasing():
    rng = np.random.default_rng(3)
    model = fit_pca(rng.standard_normal((30, 8)), 1.0)
    assert np.all(np.diff(model.variances) <= 1e-12)


def test_full_retention_keeps_every_direction():
    rng = np.random.default_rng(5)
    data = rng.standard_normal((20, 6))
    model = fit_pca(data, 1.0)
    assert model.n_components == 6
    coords = project_pca(model, data)
    np.testing.assert_allclose(reconstruct_pca(model, coords), data, atol=1e-10)
    before = np.linalg.norm(data[:, None] - data[None], axis=-1)
    after = np.linalg.norm(coords[:, None] - coords[None], axis=-1)
    assert np.abs(before - after).max() <= 1e-8


def test_isotropic_data_keeps_retention_share_of_dimensions():
    data = np.vstack([np.eye(200), -np.eye(200)])
    model = fit_pca(data, 0.99)
    assert model.n_components == 198
    assert model.explained_ratio == pytest.approx(0.99)


def test_single_vector_is_degenerate():
    with pytest.raises(DegenerateData):
        fit_pca(np.ones((1, 5)))


def test_identical_vectors_are_degenerate():
    with pytest.raises(DegenerateData):
        fit_pca(np.tile([0.1, 0.2, 0.3], (4, 1)))


def test_projection_length_mismatch():
    rng = np.random.default_rng(4)
    model = fit_pca(rng.standard_normal((10, 6)))
    with pytest.raises(LengthMismatch):
        project_pca(model, np.zeros(5))


# ============================================================================
# Test 3: PCAM Persistence
# ============================================================================

def test_pcam_layout(tmp_path):
    rng = np.random.default_rng(5)
    model = fit_pca(rank_five_data(rng, n=12, dim=7))
    data = pca_to_bytes(model)
    assert data[:4] == b"PCAM"
    assert len(data) == 4 + 4 + 4 + 8 + 8 * (7 + 7 * model.n_components)

    loaded = load_pca(save_pca(model, tmp_path / "pca.bin"))
    np.testing.assert_array_equal(loaded.basis, model.basis)
    np.testing.assert_array_equal(loaded.mean, model.mean)
    query = rng.standard_normal(7)
    np.testing.assert_array_equal(project_pca(loaded, query), project_pca(model, query))


def test_pcam_corruption():
    rng = np.random.default_rng(6)
    data = pca_to_bytes(fit_pca(rng.standard_normal((6, 4))))
    with pytest.raises(BadMagic):
        pca_from_bytes(b"NOPE" + data[4:])
    with pytest.raises(TruncatedStream):
        pca_from_bytes(data[:-8])
