"""
Gradient Local Auto-Correlation (GLAC) Descriptor

Encodes the texture of a gray image (here: a normalized MHI or SHI) as
co-occurrences of local gradient orientations.

How it works:
1. Compute the gradient (m, theta) of every pixel with a small stencil
2. Vote theta into D orientation bins, splitting the vote linearly between
   the two nearest bin centers (the G-O vector g is 2-sparse)
3. 0th order:  F0[d]      = sum_r m(r) g_d(r)
4. 1st order:  F1[d0, d1] = sum_r min(m(r), m(r+b)) g_d0(r) g_d1(r+b)
   for the four displacements b in {(dr,0), (0,dr), (dr,dr), (dr,-dr)}
5. Repeat per spatial cell and concatenate row-major: D + 4*D^2 per cell

Displacements are (dx, dy) with x the column and y the row index.
Correlation terms whose partner pixel leaves the cell are skipped.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from errors import EmptyRegion, ImageTooSmall
from schemas import GlacConfig

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
# fractional bin positions closer than this to a center snap onto it
CENTER_SNAP = 1e-12

# (row0, row1, col0, col1), half-open
Region = Tuple[int, int, int, int]


# ============================================================================
# Gradient Field
# ============================================================================

@dataclass(frozen=True)
class GradientField:
    """
    Per-pixel gradient magnitude and orientation.

    Attributes:
        m: magnitudes (>= 0); 0 where the stencil leaves the image
        theta: orientations in [0, period); 0 wherever m == 0
        signed: True -> period 2*pi, False -> period pi
    """

    m: np.ndarray
    theta: np.ndarray
    signed: bool = True

    @property
    def period(self) -> float:
        return TWO_PI if self.signed else np.pi

    @property
    def shape(self) -> Tuple[int, int]:
        return self.m.shape


def gradient_field(image: np.ndarray, operator: str = "roberts", signed: bool = True) -> GradientField:
    """
    Compute gradient magnitude and orientation with the chosen operator.

    Operators:
        roberts: the two diagonal differences of the 2x2 block anchored at
                 (y, x), rotated back to x/y derivatives; last row/column get m = 0
        sobel:   3x3 Sobel kernels; the 1-pixel border gets m = 0
        central: [-1, 0, 1] in x and y; the 1-pixel border gets m = 0

    Raises:
        ImageTooSmall: image smaller than 2x2
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 2 or img.shape[1] < 2:
        raise ImageTooSmall(f"gradient needs an image of at least 2x2, got shape {img.shape}")

    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    valid = np.zeros(img.shape, dtype=bool)

    if operator == "roberts":
        diag = img[1:, 1:] - img[:-1, :-1]
        anti = img[:-1, 1:] - img[1:, :-1]
        gx[:-1, :-1] = (diag + anti) / 2.0
        gy[:-1, :-1] = (diag - anti) / 2.0
        valid[:-1, :-1] = True
    elif operator == "central":
        if img.shape[0] >= 3 and img.shape[1] >= 3:
            gx[1:-1, 1:-1] = img[1:-1, 2:] - img[1:-1, :-2]
            gy[1:-1, 1:-1] = img[2:, 1:-1] - img[:-2, 1:-1]
            valid[1:-1, 1:-1] = True
    elif operator == "sobel":
        if img.shape[0] >= 3 and img.shape[1] >= 3:
            right = img[:-2, 2:] + 2.0 * img[1:-1, 2:] + img[2:, 2:]
            left = img[:-2, :-2] + 2.0 * img[1:-1, :-2] + img[2:, :-2]
            below = img[2:, :-2] + 2.0 * img[2:, 1:-1] + img[2:, 2:]
            above = img[:-2, :-2] + 2.0 * img[:-2, 1:-1] + img[:-2, 2:]
            gx[1:-1, 1:-1] = right - left
            gy[1:-1, 1:-1] = below - above
            valid[1:-1, 1:-1] = True
    else:
        raise ValueError(f"unknown gradient operator {operator!r}")

    m = np.where(valid, np.hypot(gx, gy), 0.0)
    period = TWO_PI if signed else np.pi
    theta = np.mod(np.arctan2(gy, gx), period)
    # mod can round a tiny negative angle up to exactly the period
    theta = np.where((m == 0) | (theta >= period), 0.0, theta)
    return GradientField(m=m, theta=theta, signed=signed)


# ============================================================================
# Orientation Coding
# ============================================================================

def _vote_pairs(theta: np.ndarray, m: np.ndarray, bins: int, period: float):
    """Vectorized linear voting between the two nearest bin centers (2*pi*k/D)."""
    position = np.asarray(theta, dtype=np.float64) * bins / period
    base = np.floor(position)
    frac = position - base
    # theta on a bin center votes for that bin only
    upper = frac > 1.0 - CENTER_SNAP
    base = np.where(upper, base + 1.0, base)
    frac = np.where(upper | (frac < CENTER_SNAP), 0.0, frac)
    bin_a = base.astype(np.int64) % bins
    bin_b = (bin_a + 1) % bins
    weight_a = 1.0 - frac
    weight_b = frac

    flat = np.asarray(m) == 0
    bin_a = np.where(flat, 0, bin_a)
    bin_b = np.where(flat, 1 % bins, bin_b)
    weight_a = np.where(flat, 1.0, weight_a)
    weight_b = np.where(flat, 0.0, weight_b)
    return bin_a, weight_a, bin_b, weight_b


def orientation_code(theta: float, m: float, bins: int, signed: bool = True):
    """
    Sparse orientation vote of one pixel.

    Returns:
        ((bin_a, w_a), (bin_b, w_b)) with w_a + w_b == 1 and both >= 0.
        A pixel with m == 0 votes ((0, 1.0), (1, 0.0)).

    Example:
        >>> orientation_code(np.pi / 8, 1.0, 8)     # midway between bins 0 and 1
        ((0, 0.5), (1, 0.5))
    """
    if bins < 2:
        raise ValueError(f"orientation coding needs at least 2 bins, got {bins}")
    period = TWO_PI if signed else np.pi
    bin_a, weight_a, bin_b, weight_b = _vote_pairs(np.float64(theta), np.float64(m), bins, period)
    return (int(bin_a), float(weight_a)), (int(bin_b), float(weight_b))


def orientation_votes(field: GradientField, bins: int) -> np.ndarray:
    """Dense (H, W, D) G-O vectors; each pixel has at most two nonzero entries."""
    bin_a, weight_a, bin_b, weight_b = _vote_pairs(field.theta, field.m, bins, field.period)
    votes = np.zeros(field.shape + (bins,), dtype=np.float64)
    rows, cols = np.indices(field.shape)
    votes[rows, cols, bin_a] += weight_a
    votes[rows, cols, bin_b] += weight_b
    return votes


# ============================================================================
# Auto-Correlation Sums
# ============================================================================

def mask_patterns(delta_r: int) -> List[Tuple[int, int]]:
    """The four first-order displacements (dx, dy)."""
    return [(delta_r, 0), (0, delta_r), (delta_r, delta_r), (delta_r, -delta_r)]


def _region_slices(shape: Tuple[int, int], region: Optional[Region]) -> Tuple[slice, slice]:
    if region is None:
        region = (0, shape[0], 0, shape[1])
    row0, row1, col0, col1 = region
    if not (0 <= row0 <= row1 <= shape[0] and 0 <= col0 <= col1 <= shape[1]):
        raise EmptyRegion(f"region {region} is not inside an image of shape {shape}")
    if row1 == row0 or col1 == col0:
        raise EmptyRegion(f"region {region} has zero area")
    return slice(row0, row1), slice(col0, col1)


def _first_order(m: np.ndarray, votes: np.ndarray, delta_r: int) -> np.ndarray:
    height, width = m.shape
    bins = votes.shape[-1]
    parts = []
    for dx, dy in mask_patterns(delta_r):
        y0, y1 = max(0, -dy), height - max(0, dy)
        x0, x1 = max(0, -dx), width - max(0, dx)
        if y1 <= y0 or x1 <= x0:
            parts.append(np.zeros(bins * bins))
            continue
        weight = np.minimum(m[y0:y1, x0:x1], m[y0 + dy : y1 + dy, x0 + dx : x1 + dx])
        pair = np.einsum(
            "yx,yxi,yxj->ij",
            weight,
            votes[y0:y1, x0:x1],
            votes[y0 + dy : y1 + dy, x0 + dx : x1 + dx],
        )
        parts.append(pair.ravel())
    return np.concatenate(parts)


def glac_0(field: GradientField, bins: int, region: Optional[Region] = None) -> np.ndarray:
    """0th order GLAC over a region: F0[d] = sum m(r) g_d(r), length D."""
    rows, cols = _region_slices(field.shape, region)
    sub = GradientField(field.m[rows, cols], field.theta[rows, cols], field.signed)
    return np.einsum("yx,yxd->d", sub.m, orientation_votes(sub, bins))


def glac_1(field: GradientField, bins: int, delta_r: int, region: Optional[Region] = None) -> np.ndarray:
    """
    1st order GLAC over a region, length 4 * D^2.

    Layout: pattern-major (in mask_patterns order), then d0, then d1.
    """
    rows, cols = _region_slices(field.shape, region)
    sub = GradientField(field.m[rows, cols], field.theta[rows, cols], field.signed)
    return _first_order(sub.m, orientation_votes(sub, bins), delta_r)


# ============================================================================
# Spatially Binned Descriptor
# ============================================================================

def cell_bounds(shape: Tuple[int, int], spatial_bins: Tuple[int, int]) -> List[Region]:
    """
    Split an image into rows x cols cells, row-major.

    Every cell gets floor(H / rows) x floor(W / cols) pixels; the remainder
    goes to the last row / column of cells.
    """
    height, width = shape
    rows, cols = spatial_bins
    if height < rows or width < cols:
        raise ImageTooSmall(f"image {height}x{width} cannot hold a {rows}x{cols} cell grid")
    row_edges = [i * (height // rows) for i in range(rows)] + [height]
    col_edges = [j * (width // cols) for j in range(cols)] + [width]
    return [
        (row_edges[i], row_edges[i + 1], col_edges[j], col_edges[j + 1])
        for i in range(rows)
        for j in range(cols)
    ]


def glac_descriptor(image: np.ndarray, cfg: GlacConfig) -> np.ndarray:
    """
    GLAC descriptor of a gray image with spatial binning.

    Args:
        image: 2D gray image
        cfg: GLAC configuration

    Returns:
        np.ndarray: length rows * cols * (D + 4 * D^2), all entries >= 0

    Example:
        >>> glac_descriptor(np.zeros((64, 64)), GlacConfig(spatial_bins=(1, 2))).shape
        (528,)
    """
    image = np.asarray(image, dtype=np.float64)
    cells = cell_bounds(image.shape, cfg.spatial_bins)
    field = gradient_field(image, cfg.gradient_operator, cfg.signed_orientation)
    votes = orientation_votes(field, cfg.orientation_bins)

    parts = []
    for row0, row1, col0, col1 in cells:
        m = field.m[row0:row1, col0:col1]
        g = votes[row0:row1, col0:col1]
        parts.append(np.einsum("yx,yxd->d", m, g))
        parts.append(_first_order(m, g, cfg.delta_r))
    return np.concatenate(parts)


def descriptor_to_frame(vector: np.ndarray, cfg: GlacConfig) -> pd.DataFrame:
    """
    Label every descriptor entry for a CSV debug dump.

    Columns: cell, order, pattern, d0, d1, value (pattern/d1 are -1 for order 0).
    """
    bins = cfg.orientation_bins
    n_cells = cfg.spatial_bins[0] * cfg.spatial_bins[1]
    if len(vector) != cfg.descriptor_length:
        raise ValueError(f"descriptor has length {len(vector)}, expected {cfg.descriptor_length}")
    records = []
    for cell in range(n_cells):
        for d0 in range(bins):
            records.append((cell, 0, -1, d0, -1))
        for pattern in range(4):
            for d0 in range(bins):
                for d1 in range(bins):
                    records.append((cell, 1, pattern, d0, d1))
    frame = pd.DataFrame(records, columns=["cell", "order", "pattern", "d0", "d1"])
    frame["value"] = np.asarray(vector, dtype=np.float64)
    return frame
