"""
3D Motion Trail Model

Projects every depth frame onto the front (xOy), side (yOz) and top (xOz)
planes and folds thresholded inter-frame differences of each plane into one
Motion History Image (MHI) and one Static History Image (SHI) per plane.

How it works:
1. Quantize depth into z_bins over the sequence depth range
2. Build the three projections of every frame
3. For every consecutive pair of projections compute the motion map
   |cur - prev| > zeta_m and the static map cur - |cur - prev| > zeta_s
4. Fold each ordered list of maps into a history image: a pixel that fires
   at step t is set to T, otherwise it decays by 1 (clamped at 0)
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from depth_io import DepthFrame, DepthSequence
from errors import DepthOutOfRange, EmptyInput, ShapeMismatch
from schemas import MtmConfig, TemplateConfig

logger = logging.getLogger(__name__)

PLANES = ("xOy", "yOz", "xOz")
KINDS = ("MHI", "SHI")


# ============================================================================
# Domain Types
# ============================================================================

@dataclass(frozen=True)
class ProjectionTriple:
    """
    Three views of one depth frame.

    Attributes:
        front: (height, width) depth map (the frame itself, as float)
        side: (z_bins, height) occupancy, side[z, y]
        top: (width, z_bins) occupancy, top[x, z]
        z_bins: depth quantization bins
    """

    front: np.ndarray
    side: np.ndarray
    top: np.ndarray
    z_bins: int

    def plane(self, name: str) -> np.ndarray:
        return {"xOy": self.front, "yOz": self.side, "xOz": self.top}[name]


@dataclass(frozen=True, eq=False)
class HistoryImage:
    """One MHI or SHI for one projection plane, values in [0, horizon]."""

    plane: str
    kind: str
    values: np.ndarray
    horizon: int

    def __post_init__(self):
        if self.plane not in PLANES or self.kind not in KINDS:
            raise ValueError(f"unknown history image {self.kind} on plane {self.plane}")
        if self.values.size and (self.values.min() < 0 or self.values.max() > self.horizon):
            raise ValueError(f"history values must lie in [0, {self.horizon}]")

    @property
    def name(self) -> str:
        return f"{self.kind}_{self.plane}"


@dataclass(frozen=True)
class MtmOutput:
    """Three MHIs and three SHIs, ordered xOy, yOz, xOz."""

    mhi: Tuple[HistoryImage, HistoryImage, HistoryImage]
    shi: Tuple[HistoryImage, HistoryImage, HistoryImage]

    def __post_init__(self):
        for kind, images in (("MHI", self.mhi), ("SHI", self.shi)):
            if tuple(image.plane for image in images) != PLANES or any(image.kind != kind for image in images):
                raise ValueError(f"{kind} images must be one per plane in order {PLANES}")

    def images(self) -> Iterator[HistoryImage]:
        """All six templates in layout order: MHI xOy, yOz, xOz, then SHI xOy, yOz, xOz."""
        yield from self.mhi
        yield from self.shi


# ============================================================================
# Projections
# ============================================================================

def depth_range(seq: DepthSequence, cfg: MtmConfig) -> Tuple[int, int]:
    """The z_range of cfg, or [min, max] of the sequence's nonzero depths."""
    if cfg.z_range is not None:
        return cfg.z_range
    nonzero = seq.depth[seq.depth > 0]
    if nonzero.size == 0:
        return 0, 1
    return int(nonzero.min()), int(nonzero.max())


def quantize_depth(depth: np.ndarray, z_range: Tuple[int, int], z_bins: int) -> np.ndarray:
    """Map depth values to bins 0..z_bins-1; the top of the range lands in the last bin."""
    z_min, z_max = z_range
    span = max(z_max - z_min, 1)
    bins = np.floor((depth.astype(np.float64) - z_min) * z_bins / span).astype(np.int64)
    return np.clip(bins, 0, z_bins - 1)


def project_frame(
    frame: DepthFrame,
    cfg: MtmConfig,
    z_range: Optional[Tuple[int, int]] = None,
) -> ProjectionTriple:
    """
    Build the front, side and top projections of one depth frame.

    Args:
        frame: the depth map
        cfg: MTM configuration (z_bins, explicit z_range)
        z_range: range found by scanning the sequence, used when cfg.z_range is None

    Raises:
        DepthOutOfRange: a nonzero depth lies outside the explicit z_range
    """
    depth = frame.depth
    if cfg.z_range is not None:
        z_range = cfg.z_range
    elif z_range is None:
        nonzero = depth[depth > 0]
        z_range = (int(nonzero.min()), int(nonzero.max())) if nonzero.size else (0, 1)

    ys, xs = np.nonzero(depth)
    values = depth[ys, xs]
    if cfg.z_range is not None and values.size:
        low, high = int(values.min()), int(values.max())
        if low < z_range[0] or high > z_range[1]:
            raise DepthOutOfRange(f"depth values [{low}, {high}] exceed z_range {z_range}")

    bins = quantize_depth(values, z_range, cfg.z_bins)
    side = np.zeros((cfg.z_bins, frame.height), dtype=np.float64)
    top = np.zeros((frame.width, cfg.z_bins), dtype=np.float64)
    side[bins, ys] = 1.0
    top[xs, bins] = 1.0
    return ProjectionTriple(front=depth.astype(np.float64), side=side, top=top, z_bins=cfg.z_bins)


# ============================================================================
# Update Functions and History Folding
# ============================================================================

def _check_shapes(prev: np.ndarray, cur: np.ndarray):
    if prev.shape != cur.shape:
        raise ShapeMismatch(f"grids differ in shape: {prev.shape} vs {cur.shape}")


def motion_update(prev: np.ndarray, cur: np.ndarray, zeta_m: float) -> np.ndarray:
    """1 where |cur - prev| > zeta_m (strict), else 0."""
    prev, cur = np.asarray(prev, dtype=np.float64), np.asarray(cur, dtype=np.float64)
    _check_shapes(prev, cur)
    return (np.abs(cur - prev) > zeta_m).astype(np.uint8)


def static_update(prev: np.ndarray, cur: np.ndarray, zeta_s: float) -> np.ndarray:
    """1 where cur - |cur - prev| > zeta_s (present and not moving), else 0."""
    prev, cur = np.asarray(prev, dtype=np.float64), np.asarray(cur, dtype=np.float64)
    _check_shapes(prev, cur)
    return (cur - np.abs(cur - prev) > zeta_s).astype(np.uint8)


def fold_history(update_maps: Sequence[np.ndarray], horizon: int, plane: str = "xOy", kind: str = "MHI") -> HistoryImage:
    """
    Fold T-1 ordered binary update maps into a history image.

    F starts at 0; at every step a firing pixel is set to T and any other
    pixel loses 1 (never below 0). A pixel whose last firing is step i
    (0-based) therefore ends at T - (T - 2 - i) = i + 2.

    Raises:
        EmptyInput: no maps
        ShapeMismatch: maps differ in shape or their count is not T - 1
    """
    if len(update_maps) == 0:
        raise EmptyInput("fold_history needs at least one update map")
    if len(update_maps) != horizon - 1:
        raise ShapeMismatch(f"expected {horizon - 1} update maps for T={horizon}, got {len(update_maps)}")
    shape = update_maps[0].shape
    if any(update.shape != shape for update in update_maps):
        raise ShapeMismatch("update maps differ in shape")

    stack = np.stack(update_maps).astype(bool)
    fired = stack.any(axis=0)
    # index of the last firing step per pixel
    last = (len(update_maps) - 1) - np.argmax(stack[::-1], axis=0)
    values = np.where(fired, last + 2, 0).astype(np.float64)
    return HistoryImage(plane=plane, kind=kind, values=values, horizon=horizon)


def compute_mtm(seq: DepthSequence, cfg: MtmConfig) -> MtmOutput:
    """
    Run the 3D motion trail model over a whole sequence.

    Returns:
        MtmOutput: MHI and SHI for each of xOy, yOz, xOz
    """
    z_range = depth_range(seq, cfg)
    projections = [project_frame(frame, cfg, z_range) for frame in seq.frames]
    horizon = seq.length

    thresholds = {
        "xOy": (cfg.zeta_m, cfg.zeta_s),
        "yOz": (cfg.zeta_m_occupancy, cfg.zeta_s_occupancy),
        "xOz": (cfg.zeta_m_occupancy, cfg.zeta_s_occupancy),
    }
    mhi, shi = [], []
    for plane in PLANES:
        zeta_m, zeta_s = thresholds[plane]
        views = [projection.plane(plane) for projection in projections]
        pairs = list(zip(views[:-1], views[1:]))
        mhi.append(fold_history([motion_update(p, c, zeta_m) for p, c in pairs], horizon, plane, "MHI"))
        shi.append(fold_history([static_update(p, c, zeta_s) for p, c in pairs], horizon, plane, "SHI"))

    logger.debug("Computed MTM for %s (T=%d, z_range=%s)", seq.seq_id, horizon, z_range)
    return MtmOutput(mhi=tuple(mhi), shi=tuple(shi))


# ============================================================================
# Template Post-Processing
# ============================================================================

def normalize_history(history: HistoryImage) -> np.ndarray:
    """Gray image in [0, 1]: every value divided by the horizon T."""
    return history.values / float(history.horizon)


def crop_and_resize(gray: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    """
    Crop to the bounding box of nonzero values, then resize bilinearly.

    Corner pixels map onto corner pixels. An all-zero image becomes an
    all-zero image of the requested size.
    """
    rows = np.flatnonzero(gray.any(axis=1))
    cols = np.flatnonzero(gray.any(axis=0))
    if rows.size == 0:
        return np.zeros(size, dtype=np.float64)
    crop = gray[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    return resize_bilinear(crop, size)


def resize_bilinear(image: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    out_h, out_w = size
    in_h, in_w = image.shape
    grid_y = np.linspace(0.0, in_h - 1, out_h)
    grid_x = np.linspace(0.0, in_w - 1, out_w)
    coords = np.meshgrid(grid_y, grid_x, indexing="ij")
    return ndimage.map_coordinates(image.astype(np.float64), coords, order=1, mode="nearest")


def prepare_template(history: HistoryImage, template: TemplateConfig) -> np.ndarray:
    """Normalize a history image and (optionally) crop/resize it for GLAC."""
    gray = normalize_history(history)
    if template.crop:
        return crop_and_resize(gray, template.size)
    return gray


# ============================================================================
# Debug Dump (PGM)
# ============================================================================

def history_to_pgm(history: HistoryImage) -> bytes:
    """8-bit binary PGM with value * 255 / T rounded half-up."""
    scaled = np.floor(history.values * 255.0 / history.horizon + 0.5).astype(np.uint8)
    height, width = scaled.shape
    return f"P5\n{width} {height}\n255\n".encode("ascii") + scaled.tobytes()


def write_history_pgm(output: MtmOutput, out_dir: Path, seq_id: str) -> List[Path]:
    """Write the six templates as "<seq_id>_<plane>_<kind>.pgm"."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for history in output.images():
        path = out_dir / f"{seq_id}_{history.plane}_{history.kind}.pgm"
        path.write_bytes(history_to_pgm(history))
        paths.append(path)
    return paths
