"""Minimal gradient-orientation feature extractor for image demos.

Per-cell unsigned orientation histograms with local block normalization.
This is deliberately a small demonstration extractor, not a faithful
reimplementation of any production HOG variant; the synthetic pipelines
work in feature space directly and do not use it.
"""

import numpy as np

from .validation import ValidationError

__all__ = ["extract_features"]


def extract_features(image, cell_size=8, bins=9, eps=1e-6):
    """Cell-binned gradient orientation histograms of a grayscale image.

    Parameters
    ----------
    image : ndarray, shape (H, W)
        Grayscale intensities.
    cell_size : int
        Square cell edge in pixels; the image is cropped to whole cells.
    bins : int
        Orientation bins over the unsigned range [0, pi).

    Returns
    -------
    ndarray, shape (H // cell_size, W // cell_size, bins)
        Per-cell histograms of gradient magnitude, each cell divided by
        the total gradient energy of its 3x3 cell neighborhood.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValidationError(f"image must be 2-D grayscale, got shape {img.shape}")
    if cell_size < 1 or bins < 1:
        raise ValidationError("cell_size and bins must be positive")
    h_cells, w_cells = img.shape[0] // cell_size, img.shape[1] // cell_size
    if h_cells < 1 or w_cells < 1:
        raise ValidationError(
            f"image {img.shape} smaller than one {cell_size}x{cell_size} cell"
        )
    img = img[: h_cells * cell_size, : w_cells * cell_size]

    gy, gx = np.gradient(img)
    magnitude = np.hypot(gx, gy)
    orientation = np.mod(np.arctan2(gy, gx), np.pi)
    bin_index = np.minimum((orientation / np.pi * bins).astype(np.int64), bins - 1)

    cells = np.zeros((h_cells, w_cells, bins))
    cy = np.arange(img.shape[0]) // cell_size
    cx = np.arange(img.shape[1]) // cell_size
    np.add.at(
        cells,
        (cy[:, None], cx[None, :], bin_index),
        magnitude,
    )

    # normalize each cell by its 3x3 neighborhood's gradient energy
    energy = np.sqrt((cells**2).sum(axis=2))
    padded = np.pad(energy, 1)
    neighborhood = sum(
        padded[1 + dy : 1 + dy + h_cells, 1 + dx : 1 + dx + w_cells]
        for dy in (-1, 0, 1)
        for dx in (-1, 0, 1)
    )
    return cells / (neighborhood[:, :, None] + eps)
