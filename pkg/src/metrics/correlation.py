"""Inter-line correlation energy."""
import numpy as np
from scipy.signal import correlate

from src.imagecore.image import Image
from src.utils.validators import require_same_shape


MIN_LINE_LENGTH = 8


def _unit(line: np.ndarray, name: str) -> np.ndarray:
    centered = line - line.mean()
    norm = np.linalg.norm(centered)
    if norm == 0:
        raise ValueError(f"{name} has zero variance")
    return centered / norm


def correlation_energy(line_a: np.ndarray, line_b: np.ndarray) -> float:
    """
    Mean squared normalized cross-correlation over all 2L - 1 lags.

    Both lines are made zero-mean and unit-norm first.

    Raises:
        ValueError: On unequal lengths, lines shorter than 8, or a flat line
    """
    a = np.asarray(line_a, dtype=np.float64).ravel()
    b = np.asarray(line_b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"Lines must have equal length, got {a.size} and {b.size}")
    if a.size < MIN_LINE_LENGTH:
        raise ValueError(f"Lines must have at least {MIN_LINE_LENGTH} samples, got {a.size}")

    xcorr = correlate(_unit(a, "line_a"), _unit(b, "line_b"), mode="full", method="direct")
    return float(np.mean(xcorr ** 2))


def line_correlation_energies(frame_a: Image, frame_b: Image, axis: int = 0) -> np.ndarray:
    """
    Correlation energy of every pair of corresponding lines of two frames.

    axis=0 compares axial lines (columns), axis=1 lateral lines (rows).
    Lines that are flat in either frame are skipped.
    """
    a = frame_a.data if isinstance(frame_a, Image) else np.asarray(frame_a, dtype=np.float64)
    b = frame_b.data if isinstance(frame_b, Image) else np.asarray(frame_b, dtype=np.float64)
    require_same_shape(a, b, names=["frame_a", "frame_b"])
    if axis not in (0, 1):
        raise ValueError(f"axis must be 0 (axial) or 1 (lateral), got {axis}")

    lines_a = a.T if axis == 0 else a
    lines_b = b.T if axis == 0 else b
    energies = [
        correlation_energy(la, lb)
        for la, lb in zip(lines_a, lines_b)
        if np.ptp(la) > 0 and np.ptp(lb) > 0
    ]
    if not energies:
        raise ValueError("Every line pair has zero variance")
    return np.asarray(energies)


def frame_pair_correlation_energy(frame_a: Image, frame_b: Image, axis: int = 0) -> float:
    """Mean correlation energy between corresponding lines of two frames."""
    return float(np.mean(line_correlation_energies(frame_a, frame_b, axis)))
