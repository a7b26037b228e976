"""Modified Shepp-Logan phantom generation."""
import numpy as np
from pydantic import BaseModel, Field

from .image import Domain, Image


# (intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)
MODIFIED_SHEPP_LOGAN = (
    (1.0, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.8, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.1, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.1, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.1, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.1, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)


class PhantomSpec(BaseModel):
    """Phantom size and background handling."""

    size: int = Field(256, ge=8, description="Square image side length")
    contrast_floor: float = Field(0.01, gt=0.0, le=0.1, description="Clamp for zero-intensity pixels")
    peak: float = Field(700.0, gt=0.0, description="Global intensity scale applied after clamping")


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    """Cartesian coordinates in [-1, 1], y pointing up the rows."""
    axis = (np.arange(size) - (size - 1) / 2.0) / ((size - 1) / 2.0)
    x = np.tile(axis, (size, 1))
    y = np.tile(axis[::-1, None], (1, size))
    return x, y


def shepp_logan(size: int) -> np.ndarray:
    """
    Rasterize the ten-ellipse modified Shepp-Logan phantom.

    Args:
        size: Image side length

    Returns:
        Raw additive intensities (unscaled, may contain tiny negative round-off)
    """
    x, y = _grid(size)
    phantom = np.zeros((size, size))

    for intensity, a, b, x0, y0, phi_deg in MODIFIED_SHEPP_LOGAN:
        phi = np.deg2rad(phi_deg)
        dx = x - x0
        dy = y - y0
        inside = ((dx * np.cos(phi) + dy * np.sin(phi)) ** 2 / a ** 2
                  + (dy * np.cos(phi) - dx * np.sin(phi)) ** 2 / b ** 2) <= 1.0
        phantom[inside] += intensity

    return phantom


def generate_phantom(spec: PhantomSpec) -> Image:
    """
    Generate the clean reference image.

    The phantom is scaled to [0, 1], clamped from below at
    `spec.contrast_floor` so that r**-0.5 stays finite, then multiplied by
    `spec.peak`. The speckle model r + r**eta * V is not scale-invariant:
    the relative speckle r**(eta-1) * sigma shrinks as the peak grows.

    Args:
        spec: Phantom parameters

    Returns:
        Envelope-domain Image
    """
    raw = np.clip(shepp_logan(spec.size), 0.0, None)
    scaled = raw / raw.max()
    clamped = np.maximum(scaled, spec.contrast_floor)
    return Image(clamped * spec.peak, Domain.ENVELOPE)
