"""Homomorphic (cepstral) PSF estimation and Wiener deconvolution."""
from typing import Optional

import numpy as np
from scipy import fft as spfft

from src.imagecore.image import Domain, Image
from src.utils.validators import require_finite

from .models import Direction, Psf1D


def _min_phase_window(n: int, cutoff: int) -> np.ndarray:
    """Low-quefrency lifter that also folds the cepstrum onto its causal part."""
    window = np.zeros(n)
    window[0] = 1.0
    upper = min(cutoff, (n + 1) // 2)
    window[1:upper] = 2.0
    if n % 2 == 0 and cutoff > n // 2:
        window[n // 2] = 1.0
    return window


def estimate_psf_spectrum(data: np.ndarray, lifter_cutoff: int) -> np.ndarray:
    """
    Minimum-phase PSF spectrum from the column-averaged log-magnitude.

    Args:
        data: (length, channels) RF lines along axis 0
        lifter_cutoff: Number of low-quefrency cepstral samples kept

    Returns:
        Complex spectrum of length `length`, scaled to a unit-energy PSF
    """
    n = data.shape[0]
    if lifter_cutoff < 1 or lifter_cutoff >= n:
        raise ValueError(f"lifter_cutoff must be in [1, {n - 1}] for lines of length {n}, got {lifter_cutoff}")

    magnitude = np.abs(spfft.fft(data, axis=0))
    floor = max(float(magnitude.max()) * 1e-12, np.finfo(np.float64).tiny)
    log_mag = np.mean(np.log(magnitude + floor), axis=1)

    cepstrum = spfft.ifft(log_mag).real
    spectrum = np.exp(spfft.fft(cepstrum * _min_phase_window(n, lifter_cutoff)))
    energy = np.sqrt(np.mean(np.abs(spectrum) ** 2))
    return spectrum / energy


def estimate_psf(rf: Image, lifter_cutoff: int, direction: Direction = "axial") -> Psf1D:
    """Cepstral PSF estimate along columns (axial) or rows (lateral)."""
    data = rf.data if direction == "axial" else rf.data.T
    spectrum = estimate_psf_spectrum(data, lifter_cutoff)
    return Psf1D(spfft.ifft(spectrum).real, direction)


def _wiener_pass(data: np.ndarray, lifter_cutoff: int, noise_floor: float) -> np.ndarray:
    spectrum = estimate_psf_spectrum(data, lifter_cutoff)
    power = np.abs(spectrum) ** 2
    inverse = np.conj(spectrum) / (power + noise_floor * power.max())
    return spfft.ifft(spfft.fft(data, axis=0) * inverse[:, None], axis=0).real


def cepstrum_deconvolve(rf: Image, lifter_cutoff: int = 16, noise_floor: float = 1e-3) -> Image:
    """
    Axial cepstral deconvolution, one Wiener inverse per column.

    Raises:
        ValueError: If lifter_cutoff >= column length or the data is non-finite
    """
    if noise_floor <= 0:
        raise ValueError(f"noise_floor must be positive, got {noise_floor}")
    require_finite(rf.data, "rf data")
    return Image(_wiener_pass(rf.data, lifter_cutoff, noise_floor), Domain.RF)


def cepstrum_deconvolve_2d(
    rf: Image,
    lifter_cutoff: int = 16,
    noise_floor: float = 1e-3,
    lateral_cutoff: Optional[int] = None,
) -> Image:
    """Axial cepstral pass over columns, then a lateral pass over rows."""
    axial = cepstrum_deconvolve(rf, lifter_cutoff, noise_floor)
    if lateral_cutoff is None:
        lateral_cutoff = min(lifter_cutoff, max(1, rf.cols // 2))
    lateral = _wiener_pass(axial.data.T, lateral_cutoff, noise_floor)
    return Image(lateral.T, Domain.RF)
