"""Reference-based image quality indices: SNR, PSNR, SSIM, EPI."""
from typing import Iterable, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from src.imagecore.image import Image
from src.utils.logging import log_event
from src.utils.validators import require_same_shape


DB_FLOOR = -300.0
DB_CAP = 300.0

Roi = tuple[int, int, int, int]
ArrayLike = Union[Image, np.ndarray]


def _data(img: ArrayLike) -> np.ndarray:
    return np.asarray(img.data if isinstance(img, Image) else img, dtype=np.float64)


def to_db(ratio: float, scale: float = 10.0) -> float:
    """scale*log10(ratio), clipped to [DB_FLOOR, DB_CAP]; 0 and inf map to the bounds."""
    if ratio <= 0:
        return DB_FLOOR
    if np.isinf(ratio):
        return DB_CAP
    return float(np.clip(scale * np.log10(ratio), DB_FLOOR, DB_CAP))


def _pair(ref: ArrayLike, test: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    a, b = _data(ref), _data(test)
    require_same_shape(a, b, names=["ref", "test"])
    return a, b


def snr(ref: ArrayLike, test: ArrayLike) -> float:
    """10 log10(sum ref^2 / sum (ref - test)^2), capped at 300 dB."""
    a, b = _pair(ref, test)
    err = np.sum((a - b) ** 2)
    if err == 0:
        return DB_CAP
    return to_db(np.sum(a ** 2) / err)


def psnr(ref: ArrayLike, test: ArrayLike) -> float:
    """10 log10(max(ref)^2 * M * N / sum (ref - test)^2), capped at 300 dB."""
    a, b = _pair(ref, test)
    err = np.sum((a - b) ** 2)
    if err == 0:
        return DB_CAP
    return to_db(np.max(a) ** 2 * a.size / err)


def ssim(ref: ArrayLike, test: ArrayLike, window: int = 8, k1: float = 0.01, k2: float = 0.03) -> float:
    """
    Mean structural similarity over all window x window patches (stride 1).

    Local statistics use uniform weights and population (co)variances. The
    dynamic range L is taken jointly over both images so the index is
    symmetric in its arguments; a zero joint range falls back to L = 1.

    Raises:
        ValueError: If the window is larger than the image
    """
    a, b = _pair(ref, test)
    if window < 1 or window > min(a.shape):
        raise ValueError(f"SSIM window {window} does not fit image of shape {a.shape}")

    data_range = max(a.max(), b.max()) - min(a.min(), b.min())
    if data_range == 0:
        data_range = 1.0
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2

    wa = sliding_window_view(a, (window, window))
    wb = sliding_window_view(b, (window, window))
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    var_a = wa.var(axis=(-2, -1))
    var_b = wb.var(axis=(-2, -1))
    cov = (wa * wb).mean(axis=(-2, -1)) - mu_a * mu_b

    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _check_roi(roi: Sequence[int], shape: tuple[int, int]) -> Roi:
    row, col, height, width = (int(v) for v in roi)
    if height < 1 or width < 1 or row < 0 or col < 0 or row + height > shape[0] or col + width > shape[1]:
        raise ValueError(f"ROI {(row, col, height, width)} is outside image of shape {shape}")
    return row, col, height, width


def epi(ref: ArrayLike, test: ArrayLike, rois: Iterable[Sequence[int]]) -> float:
    """
    Edge preservation index averaged over ROIs.

    Per ROI: Pearson correlation of the 3x3 Laplacian high-pass of ref and
    test. ROIs with zero variance in either high-pass are skipped.

    Args:
        ref: Reference image
        test: Test image
        rois: (row, col, height, width) rectangles

    Raises:
        ValueError: On an out-of-bounds ROI, or if every ROI is flat
    """
    a, b = _pair(ref, test)
    hp_a = ndimage.laplace(a, mode="reflect")
    hp_b = ndimage.laplace(b, mode="reflect")

    values = []
    for roi in rois:
        row, col, height, width = _check_roi(roi, a.shape)
        pa = hp_a[row:row + height, col:col + width].ravel()
        pb = hp_b[row:row + height, col:col + width].ravel()
        pa = pa - pa.mean()
        pb = pb - pb.mean()
        denom = np.sqrt(np.sum(pa ** 2) * np.sum(pb ** 2))
        if denom == 0:
            log_event("epi_flat_roi", level="warning", roi=[row, col, height, width])
            continue
        values.append(float(np.sum(pa * pb) / denom))

    if not values:
        raise ValueError("EPI undefined: every ROI is flat in the high-pass domain")
    return float(np.mean(values))
