"""Envelope detection for RF data."""
import numpy as np
from scipy.signal import hilbert

from src.utils.validators import require_finite

from .image import Domain, FrameStack, Image


def envelope(rf: Image) -> Image:
    """
    Per-column magnitude of the analytic signal.

    Columns are A-lines, so the transform runs along axis 0 with a
    full-length DFT and no windowing.

    Args:
        rf: RF-domain image (signed)

    Returns:
        Envelope-domain image, all values >= 0

    Raises:
        ValueError: If the input holds non-finite values
    """
    data = np.asarray(rf.data if isinstance(rf, Image) else rf, dtype=np.float64)
    require_finite(data, "rf data")
    analytic = hilbert(data, axis=0)
    return Image(np.abs(analytic), Domain.ENVELOPE)


def envelope_stack(stack: FrameStack) -> FrameStack:
    """Envelope of every frame of an RF FrameStack."""
    return FrameStack([envelope(frame) for frame in stack], Domain.ENVELOPE)
