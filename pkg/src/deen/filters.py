"""Median + Gaussian ("MG") denoising baseline and the err/pixel metric."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .core import DimensionError

TRUNCATE = 3.0


def mg_filter(image, median_window: int = 3, gauss_sigma: float = 1.0) -> np.ndarray:
    """Median filter followed by a Gaussian blur, both with edge-replicate padding.

    The blur kernel is truncated at 3 sigma (radius ``int(3 sigma + 0.5)``)
    and normalized to unit sum.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError("mg_filter expects a 2-D image")
    if median_window % 2 == 0 or median_window < 1:
        raise ValueError("median window must be a positive odd integer")
    if median_window > min(img.shape):
        raise DimensionError(f"window {median_window} larger than image {img.shape}")
    out = ndimage.median_filter(img, size=median_window, mode="nearest")
    if gauss_sigma > 0:
        out = ndimage.gaussian_filter(out, gauss_sigma, mode="nearest", truncate=TRUNCATE)
    return out


def mg_filter_batch(patches: np.ndarray, height: int, width: int, **kw) -> np.ndarray:
    flat = np.atleast_2d(patches)
    out = np.empty_like(flat, dtype=np.float64)
    for i, row in enumerate(flat):
        out[i] = mg_filter(row.reshape(height, width), **kw).ravel()
    return out


def err_per_pixel(x, x_hat) -> float:
    """Squared error ``||x - x_hat||^2`` divided by the number of pixels."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    return float(np.sum((x - x_hat) ** 2) / x.size)
