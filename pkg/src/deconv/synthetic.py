"""Synthetic separable-blur test pairs and resolution measures."""
from typing import Optional

import numpy as np
from scipy.signal import correlate, fftconvolve

from src.imagecore.image import Domain, Image


def default_axial_psf(length: int = 8) -> np.ndarray:
    """
    Gaussian-windowed cosine pulse at 1/8 cycle per sample, unit norm.

    The envelope peaks half a sample before the middle so the taps are not
    symmetric and the spectrum has no exact zero at Nyquist.
    """
    t = np.arange(length) - (length - 2) / 2.0
    taps = np.exp(-(t / (length / 4.0)) ** 2) * np.cos(0.25 * np.pi * t)
    return taps / np.linalg.norm(taps)


def default_lateral_psf() -> np.ndarray:
    """Skewed 4-tap beam profile, unit norm; no spectral zero at Nyquist."""
    taps = np.array([0.4, 1.0, 0.7, 0.25])
    return taps / np.linalg.norm(taps)


def separable_blur_pair(
    shape: tuple[int, int],
    axial_psf: Optional[np.ndarray] = None,
    lateral_psf: Optional[np.ndarray] = None,
    density: float = 0.3,
    seed: int = 0,
) -> tuple[Image, Image]:
    """
    Sparse Gaussian TRF and its full separable convolution.

    The TRF is (M - La + 1) x (N - Ll + 1) so that the blurred RF image is
    exactly `shape`.

    Returns:
        (trf, rf) images, both RF-domain
    """
    s_a = default_axial_psf() if axial_psf is None else np.asarray(axial_psf, dtype=np.float64)
    s_l = default_lateral_psf() if lateral_psf is None else np.asarray(lateral_psf, dtype=np.float64)
    rows, cols = shape
    trf_shape = (rows - s_a.size + 1, cols - s_l.size + 1)
    if min(trf_shape) < 1:
        raise ValueError(f"Image shape {shape} too small for PSFs of length {s_a.size} x {s_l.size}")

    rng = np.random.default_rng(seed)
    trf = rng.standard_normal(trf_shape) * (rng.random(trf_shape) < density)
    rf = fftconvolve(trf, np.outer(s_a, s_l), mode="full")
    return Image(trf, Domain.RF), Image(rf, Domain.RF)


def autocorrelation_width(img: Image, axis: int = 0) -> float:
    """
    -6 dB width (in samples) of the mean normalized autocorrelation.

    axis=0 measures along columns (axial), axis=1 along rows (lateral). The
    half-amplitude crossing is linearly interpolated; flat lines are skipped.
    """
    if axis not in (0, 1):
        raise ValueError(f"axis must be 0 (axial) or 1 (lateral), got {axis}")
    lines = img.data.T if axis == 0 else img.data

    profiles = []
    for line in lines:
        centered = line - line.mean()
        energy = float(np.sum(centered ** 2))
        if energy == 0:
            continue
        full = correlate(centered, centered, mode="full", method="direct")
        profiles.append(full[centered.size - 1:] / energy)
    if not profiles:
        raise ValueError("Every line is flat; autocorrelation width undefined")

    mean_profile = np.mean(profiles, axis=0)
    below = np.nonzero(mean_profile < 0.5)[0]
    if below.size == 0:
        return 2.0 * (mean_profile.size - 1)
    k = int(below[0])
    prev, cur = mean_profile[k - 1], mean_profile[k]
    crossing = (k - 1) + (prev - 0.5) / (prev - cur)
    return 2.0 * crossing
