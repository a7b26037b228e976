"""Optional denoiser hook and single-frame baseline filters."""
from typing import Literal

import numpy as np
import pywt
from scipy import ndimage

from src.imagecore.image import Domain, Image


BaselineMethod = Literal["mean", "median"]


def hard_threshold_denoise(img: Image, level: float) -> Image:
    """
    Single-level separable Haar wavelet hard thresholding.

    Detail coefficients below level * sigma_hat are zeroed, with
    sigma_hat = median(|HH|) / 0.6745.
    """
    if level <= 0:
        raise ValueError(f"Threshold level must be positive, got {level}")

    approx, (horiz, vert, diag) = pywt.dwt2(img.data, "haar")
    sigma_hat = np.median(np.abs(diag)) / 0.6745
    threshold = level * sigma_hat
    details = tuple(pywt.threshold(band, threshold, mode="hard") for band in (horiz, vert, diag))

    restored = pywt.idwt2((approx, details), "haar")[:img.rows, :img.cols]
    if img.domain is Domain.ENVELOPE:
        restored = np.clip(restored, 0.0, None)
    return img.with_data(restored)


def baseline_despeckle(frame: Image, method: BaselineMethod = "median", size: int = 5) -> Image:
    """
    Classic single-frame smoothing used as a comparison row.

    Args:
        frame: Noisy envelope frame
        method: 'mean' (box filter) or 'median'
        size: Square filter footprint
    """
    if size < 1:
        raise ValueError(f"Filter size must be >= 1, got {size}")
    if method == "mean":
        smoothed = ndimage.uniform_filter(frame.data, size=size, mode="reflect")
    elif method == "median":
        smoothed = ndimage.median_filter(frame.data, size=size, mode="reflect")
    else:
        raise ValueError(f"Unknown baseline method '{method}'. Use 'mean' or 'median'")
    if frame.domain is Domain.ENVELOPE:
        # running sums can leave -0.0 style round-off
        smoothed = np.clip(smoothed, 0.0, None)
    return frame.with_data(smoothed)
