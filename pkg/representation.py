"""
Action Representation

Turns the six history images of a sequence into one action vector
(GMHI = GLAC of the three MHIs, GSHI = GLAC of the three SHIs, fused by
concatenation and l2-normalized), and reduces action vectors with PCA.

Key Concepts:
- Segment: the GLAC descriptor of one history image, e.g. GMHI_xOy
- Feature set: which segments go into the vector (fused, gmhi, gshi)
- Retention: PCA keeps the fewest components whose cumulative explained
  variance reaches the target (0.99 by default)
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
from sklearn.decomposition import PCA

from errors import BadMagic, DegenerateData, LengthMismatch, TruncatedStream
from glac import glac_descriptor
from mtm import MtmOutput, prepare_template
from schemas import GlacConfig, TemplateConfig

logger = logging.getLogger(__name__)

SEGMENTS = ("GMHI_xOy", "GMHI_yOz", "GMHI_xOz", "GSHI_xOy", "GSHI_yOz", "GSHI_xOz")
FEATURE_SEGMENTS = {
    "fused": SEGMENTS,
    "gmhi": SEGMENTS[:3],
    "gshi": SEGMENTS[3:],
}

# Cumulative ratios are compared with this slack so that exactly-equal
# eigenvalues do not lose the boundary component to rounding.
RETENTION_TOLERANCE = 1e-9


def segment_name(kind: str, plane: str) -> str:
    return f"G{kind}_{plane}"


# ============================================================================
# Action Vectors
# ============================================================================

@dataclass(frozen=True, eq=False)
class ActionVector:
    """
    Dense action representation of one sequence.

    Attributes:
        values: l2-normalized concatenation of the segments in `layout`
        layout: ordered segment labels
        label: action id
    """

    values: np.ndarray
    layout: Tuple[str, ...]
    label: int = 0
    subject_id: int = 0
    trial_id: int = 0
    seq_id: str = ""

    def __len__(self):
        return len(self.values)


def history_templates(mtm: MtmOutput, template: TemplateConfig) -> Dict[str, np.ndarray]:
    """Normalized (and cropped/resized) gray template per segment, in layout order."""
    return {
        segment_name(history.kind, history.plane): prepare_template(history, template)
        for history in mtm.images()
    }


def template_segments(templates: Dict[str, np.ndarray], cfg: GlacConfig) -> Dict[str, np.ndarray]:
    """GLAC descriptor of every template."""
    return {name: glac_descriptor(templates[name], cfg) for name in SEGMENTS}


def extract_segments(mtm: MtmOutput, cfg: GlacConfig, template: TemplateConfig) -> Dict[str, np.ndarray]:
    """Raw (unnormalized) GLAC descriptor of each of the six history images."""
    return template_segments(history_templates(mtm, template), cfg)


def l2_normalize(values: np.ndarray) -> np.ndarray:
    """Divide a vector (or each row of a matrix) by its l2 norm; zero vectors pass through unchanged."""
    norms = np.linalg.norm(values, axis=-1, keepdims=True)
    return values / np.where(norms > 0, norms, 1.0)


def assemble_vector(segments: Dict[str, np.ndarray], feature_set: str = "fused") -> np.ndarray:
    """Concatenate the segments of a feature set in layout order and l2-normalize."""
    names = FEATURE_SEGMENTS[feature_set]
    return l2_normalize(np.concatenate([segments[name] for name in names]))


def build_action_vector(
    mtm: MtmOutput,
    cfg: GlacConfig,
    template: TemplateConfig = TemplateConfig(),
    feature_set: str = "fused",
    label: int = 0,
    subject_id: int = 0,
    trial_id: int = 0,
    seq_id: str = "",
) -> ActionVector:
    """
    Build the action vector of one MTM output.

    With the default fused feature set, D = 8 and a 1x2 spatial grid the
    vector has 6 * 2 * (8 + 4 * 64) = 3168 entries.
    """
    segments = extract_segments(mtm, cfg, template)
    return ActionVector(
        values=assemble_vector(segments, feature_set),
        layout=FEATURE_SEGMENTS[feature_set],
        label=label,
        subject_id=subject_id,
        trial_id=trial_id,
        seq_id=seq_id,
    )


# ============================================================================
# PCA
# ============================================================================

@dataclass(frozen=True, eq=False)
class PcaModel:
    """
    Fitted PCA reduction.

    Attributes:
        mean: training mean, length input_dim
        basis: (input_dim, k) orthonormal columns, ordered by decreasing variance
        explained_ratio: cumulative explained variance of the k kept components
        variances: variance along each kept component (non-increasing)
    """

    mean: np.ndarray
    basis: np.ndarray
    explained_ratio: float
    variances: np.ndarray = None

    @property
    def input_dim(self) -> int:
        return int(self.mean.shape[0])

    @property
    def n_components(self) -> int:
        return int(self.basis.shape[1])


def fit_pca(train: np.ndarray, retention: float = 0.99) -> PcaModel:
    """
    Fit PCA on training vectors and keep the minimal k reaching `retention`.

    How it works:
    1. Center on the training mean
    2. Factor the centered matrix with a full SVD (scikit-learn); with fewer
       samples than dimensions this works on the N x N side of the problem
    3. Keep the first k components whose cumulative ratio >= retention

    Args:
        train: (N, dim) matrix, one action vector per row
        retention: target fraction of the total variance, in (0, 1]

    Raises:
        DegenerateData: fewer than 2 vectors, or all vectors identical
    """
    data = np.asarray(train, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise DegenerateData(f"PCA needs at least 2 training vectors, got shape {data.shape}")
    if not 0 < retention <= 1:
        raise ValueError(f"retention must lie in (0, 1], got {retention}")
    if np.allclose(data, data[0], rtol=0.0, atol=1e-15):
        raise DegenerateData("all training vectors are identical; there is no variance to keep")

    pca = PCA(svd_solver="full").fit(data)
    cumulative = np.cumsum(pca.explained_variance_ratio_)
    k = int(np.searchsorted(cumulative, retention - RETENTION_TOLERANCE, side="left")) + 1
    k = min(k, len(cumulative))

    model = PcaModel(
        mean=pca.mean_.copy(),
        basis=np.ascontiguousarray(pca.components_[:k].T),
        explained_ratio=float(min(cumulative[k - 1], 1.0)),
        variances=pca.explained_variance_[:k].copy(),
    )
    logger.info(
        "PCA kept %d of %d dimensions (%.4f of the variance)",
        model.n_components,
        model.input_dim,
        model.explained_ratio,
    )
    return model


def project_pca(model: PcaModel, vectors: np.ndarray) -> np.ndarray:
    """basis^T (v - mean) for one vector or each row of a matrix."""
    data = np.asarray(vectors, dtype=np.float64)
    if data.shape[-1] != model.input_dim:
        raise LengthMismatch(f"vector length {data.shape[-1]} does not match PCA input {model.input_dim}")
    return (data - model.mean) @ model.basis


def reconstruct_pca(model: PcaModel, coords: np.ndarray) -> np.ndarray:
    """mean + basis * coords (inverse of project_pca on the kept subspace)."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape[-1] != model.n_components:
        raise LengthMismatch(f"coordinate length {coords.shape[-1]} does not match k={model.n_components}")
    return model.mean + coords @ model.basis.T


# ============================================================================
# PCA Persistence ("PCAM" flat binary)
# ============================================================================
# Layout, little-endian: magic "PCAM", u32 dims, u32 k, f64 explained_ratio,
# f64 mean[dims], f64 basis[dims * k] (row-major, dims x k).

PCA_MAGIC = b"PCAM"
PCA_HEADER = struct.Struct("<4sIId")


def pca_to_bytes(model: PcaModel) -> bytes:
    header = PCA_HEADER.pack(PCA_MAGIC, model.input_dim, model.n_components, model.explained_ratio)
    return (
        header
        + model.mean.astype("<f8").tobytes()
        + np.ascontiguousarray(model.basis).astype("<f8").tobytes(order="C")
    )


def pca_from_bytes(data: bytes) -> PcaModel:
    if data[:4] != PCA_MAGIC:
        raise BadMagic(f"expected magic {PCA_MAGIC!r}, got {bytes(data[:4])!r}")
    if len(data) < PCA_HEADER.size:
        raise TruncatedStream("PCAM header is incomplete")
    _, dims, k, explained = PCA_HEADER.unpack_from(data)
    expected = PCA_HEADER.size + 8 * (dims + dims * k)
    if len(data) != expected:
        raise TruncatedStream(f"PCAM header declares {expected} bytes, stream has {len(data)}")
    payload = np.frombuffer(data, dtype="<f8", offset=PCA_HEADER.size)
    mean = payload[:dims].astype(np.float64)
    basis = payload[dims:].astype(np.float64).reshape(dims, k)
    return PcaModel(mean=mean, basis=basis, explained_ratio=float(explained))


def save_pca(model: PcaModel, path: Path) -> Path:
    path = Path(path)
    path.write_bytes(pca_to_bytes(model))
    return path


def load_pca(path: Path) -> PcaModel:
    return pca_from_bytes(Path(path).read_bytes())
