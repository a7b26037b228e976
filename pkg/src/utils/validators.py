"""Array validation helpers."""
from typing import Optional, Sequence

import numpy as np


class DivergenceError(RuntimeError):
    """Raised when an iterative estimator produces non-finite values."""

    def __init__(self, stage: str, iteration: int):
        self.stage = stage
        self.iteration = iteration
        super().__init__(f"{stage} diverged at iteration {iteration}: non-finite values")


def check_finite(data: np.ndarray, name: str = "data") -> tuple[bool, Optional[str]]:
    """
    Check that an array holds only finite values.

    Args:
        data: Array to check
        name: Name used in the error message

    Returns:
        Tuple of (is_valid, error_message)
    """
    if not np.all(np.isfinite(data)):
        return False, f"{name} contains non-finite values"
    return True, None


def check_same_shape(*arrays: np.ndarray, names: Optional[Sequence[str]] = None) -> tuple[bool, Optional[str]]:
    """
    Check that all arrays share one shape.

    Args:
        *arrays: Arrays to compare
        names: Optional names used in the error message

    Returns:
        Tuple of (is_valid, error_message)
    """
    if len(arrays) < 2:
        return True, None

    shapes = [np.shape(a) for a in arrays]
    if any(shape != shapes[0] for shape in shapes[1:]):
        labels = names or [f"arg{i}" for i in range(len(arrays))]
        detail = ", ".join(f"{label}={shape}" for label, shape in zip(labels, shapes))
        return False, f"Dimension mismatch: {detail}"

    return True, None


def require_finite(data: np.ndarray, name: str = "data"):
    """Raise ValueError if data holds NaN or inf."""
    is_valid, error_msg = check_finite(data, name)
    if not is_valid:
        raise ValueError(error_msg)


def require_same_shape(*arrays: np.ndarray, names: Optional[Sequence[str]] = None):
    """Raise ValueError if the arrays differ in shape."""
    is_valid, error_msg = check_same_shape(*arrays, names=names)
    if not is_valid:
        raise ValueError(error_msg)


def require_positive(data: np.ndarray, name: str = "data"):
    """Raise ValueError unless every value is strictly positive."""
    if np.any(data <= 0):
        raise ValueError(f"{name} must be strictly positive (min={float(np.min(data)):.3g})")


def require_frames(p: int, minimum: int = 2):
    """Raise ValueError if fewer than `minimum` frames are available."""
    if p < minimum:
        raise ValueError(f"p >= {minimum} required, got p={p}")
