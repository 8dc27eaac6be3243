"""Feature-map reduction: mask construction and multi-order moment pooling.

The embedding of a localized detection is built in three steps: rescale the
predicted box onto the feature grid as a binary mask, gather the masked
spatial positions, and concatenate per-channel statistical moments. The
first moment is the raw per-channel mean (so order 1 reduces to plain
masked average pooling); moments of order n >= 2 are central with
population (divisor-N) normalization, so single-cell supports are legal and
yield zero central moments.

Layout of an order-R embedding over D channels: R contiguous blocks of D,
block n holding the n-th moment of every channel.

All arithmetic runs in float64. Masked values are sorted per channel before
summation, which makes every statistic a function of the per-channel value
multiset only: permuting spatial positions together with the mask leaves
the result bitwise unchanged, independent of run or thread count.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    EmptySupport,
    InvalidBox,
    InvalidConfig,
    MissingLogits,
    ShapeMismatch,
)
from .model import BoundingBox, ReductionConfig


def build_mask(
    bbox: BoundingBox,
    image_size: tuple[int, int],
    feature_dims: tuple[int, int],
) -> np.ndarray:
    """Rescale a pixel-space box onto the feature grid as a boolean mask.

    A cell (r, c) is kept iff its center ((c+0.5)*W/W', (r+0.5)*H/H') lies
    inside [x1, x2) x [y1, y2). Grids with H/H' != W/W' are handled by
    rescaling each axis independently. If no cell center qualifies (a box
    smaller than one cell), exactly the cell containing the box center is
    kept, with coordinates clamped to the grid, so the mask is never empty.

    Args:
        bbox: box in image pixel coordinates.
        image_size: (H, W) of the source image.
        feature_dims: (H', W') of the feature grid.

    Returns:
        Boolean array of shape (H', W') with at least one True cell.
    """
    h, w = int(image_size[0]), int(image_size[1])
    gh, gw = int(feature_dims[0]), int(feature_dims[1])
    if gh < 1 or gw < 1:
        raise ShapeMismatch(f"feature grid must be >= 1x1, got {feature_dims}")
    bbox.validate((h, w))
    cx = (np.arange(gw, dtype=np.float64) + 0.5) * (w / gw)
    cy = (np.arange(gh, dtype=np.float64) + 0.5) * (h / gh)
    in_x = (bbox.x1 <= cx) & (cx < bbox.x2)
    in_y = (bbox.y1 <= cy) & (cy < bbox.y2)
    mask = in_y[:, None] & in_x[None, :]
    if not mask.any():
        bx = 0.5 * (bbox.x1 + bbox.x2)
        by = 0.5 * (bbox.y1 + bbox.y2)
        c = min(max(int(bx * gw / w), 0), gw - 1)
        r = min(max(int(by * gh / h), 0), gh - 1)
        mask[r, c] = True
    return mask


def _moments_kernel(values: np.ndarray, order: int) -> np.ndarray:
    """Per-column moments of an (N, D) matrix; returns (order, D).

    Row 0 is the raw mean; row n-1 for n >= 2 is the n-th central moment
    with divisor N. Columns are sorted first so the summation order is a
    canonical function of each column's value multiset.
    """
    n = values.shape[0]
    if n == 0:
        raise EmptySupport("no values to reduce")
    xs = np.sort(np.asarray(values, dtype=np.float64), axis=0)
    out = np.empty((order, xs.shape[1]), dtype=np.float64)
    mean = xs.sum(axis=0) / n
    out[0] = mean
    if order > 1:
        dev = xs - mean
        p = dev
        for k in range(2, order + 1):
            p = p * dev
            out[k - 1] = p.sum(axis=0) / n
    return out


def central_moments(values, order: int) -> np.ndarray:
    """First ``order`` moments of a 1-D value list (mean, then central).

    central_moments(v, R)[0] is the mean; element n-1 for n >= 2 equals
    (1/N) * sum((v_j - mean)**n).
    """
    if not 1 <= int(order) <= 8:
        raise InvalidConfig(f"order must be in [1, 8], got {order}")
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise EmptySupport("central_moments of empty input")
    return _moments_kernel(arr[:, None], int(order))[:, 0]


def reduce_features(
    feature_map: np.ndarray,
    mask: np.ndarray | None,
    config: ReductionConfig,
    logits: np.ndarray | None = None,
) -> np.ndarray:
    """Turn one (H', W', D) feature map into the metric-space embedding.

    mode 'logits' returns the logits vector unchanged; 'ee' the masked
    per-channel mean (D dims); 'aee' the per-channel moments over masked
    positions, concatenated block-wise into R*D dims. With
    config.use_mask=False the mask argument is ignored and an all-true mask
    is used (the no-mask ablation).
    """
    if config.mode == "logits":
        if logits is None:
            raise MissingLogits("reduction mode 'logits' needs a logits vector")
        return np.asarray(logits, dtype=np.float64).reshape(-1).copy()

    fm = np.asarray(feature_map, dtype=np.float64)
    if fm.ndim != 3:
        raise ShapeMismatch(f"feature map must be (H', W', D), got shape {fm.shape}")
    gh, gw, d = fm.shape
    if config.use_mask:
        if mask is None:
            raise ShapeMismatch("config.use_mask=True but no mask was given")
        m = np.asarray(mask, dtype=bool)
        if m.shape != (gh, gw):
            raise ShapeMismatch(f"mask shape {m.shape} != spatial dims {(gh, gw)}")
    else:
        m = np.ones((gh, gw), dtype=bool)
    selected = fm[m]
    if selected.shape[0] == 0:
        raise EmptySupport("mask selects no cells")
    order = config.effective_order
    return _moments_kernel(selected, order).reshape(order * d)


def standardizer_fit(embeddings) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension (shift, scale) over a list of equal-length embeddings.

    shift is the mean, scale the population standard deviation; dimensions
    with scale below 1e-12 get scale 1 so constant dimensions pass through
    unchanged.
    """
    mat = np.asarray(list(embeddings), dtype=np.float64)
    if mat.ndim == 1:
        mat = mat[None, :]
    if mat.size == 0 or mat.shape[0] == 0:
        raise EmptySupport("standardizer_fit of empty list")
    shift = mat.mean(axis=0)
    scale = mat.std(axis=0)
    scale = np.where(scale < 1e-12, 1.0, scale)
    return shift, scale


def apply_standardizer(x: np.ndarray, stats: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """(x - shift) / scale, broadcasting over leading axes."""
    shift, scale = stats
    return (np.asarray(x, dtype=np.float64) - shift) / scale
