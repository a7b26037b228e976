"""Multiframe speckle synthesis and ground-truth speckle fields."""
import numpy as np
from pydantic import BaseModel, Field

from src.imagecore.image import Domain, FrameStack, Image
from src.utils.logging import log_event
from src.utils.validators import require_positive, require_same_shape


RNG_ALGORITHM = "PCG64"


class SpeckleParams(BaseModel):
    """Parameters of the multiplicative speckle model r + r**eta * V_k."""

    sigma: float = Field(0.4, gt=0.0, description="Standard deviation of V_k")
    eta: float = Field(0.5, gt=0.0, le=1.0, description="Intensity exponent")
    p: int = Field(10, ge=2, description="Number of frames")
    seed: int = Field(0, ge=0, description="Root seed for the per-frame substreams")


def frame_generators(seed: int, p: int) -> list[np.random.Generator]:
    """One independent generator per frame, derived from (seed, k)."""
    children = np.random.SeedSequence(seed).spawn(p)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


def draw_speckle_noise(shape: tuple[int, int], params: SpeckleParams) -> np.ndarray:
    """
    Draw the V_k fields used by synthesize_frames.

    Returns:
        Array of shape (p, M, N) with entries ~ N(0, sigma**2)
    """
    gens = frame_generators(params.seed, params.p)
    return np.stack([params.sigma * gen.standard_normal(shape) for gen in gens])


def _raw_frames(clean: Image, params: SpeckleParams) -> np.ndarray:
    r = clean.data
    require_positive(r, "clean image")
    noise = draw_speckle_noise(clean.shape, params)
    return r[None] + r[None] ** params.eta * noise


def clamp_rate(clean: Image, params: SpeckleParams) -> float:
    """Fraction of synthesized pixels that fall below zero before clamping."""
    return float(np.mean(_raw_frames(clean, params) < 0))


def synthesize_frames(clean: Image, params: SpeckleParams) -> FrameStack:
    """
    Synthesize p speckle-corrupted envelope frames.

    Frame k is r + r**eta * V_k with negative results clamped to 0.

    Args:
        clean: Strictly positive envelope-domain image
        params: Speckle parameters

    Returns:
        Envelope-domain FrameStack of p frames

    Raises:
        ValueError: If any clean pixel is <= 0
    """
    frames = _raw_frames(clean, params)
    negative = frames < 0
    rate = float(negative.mean())
    frames[negative] = 0.0

    log_event(
        "speckle_synthesized",
        level="warning" if rate > 0 else "info",
        sigma=params.sigma,
        eta=params.eta,
        frames=params.p,
        seed=params.seed,
        rng=RNG_ALGORITHM,
        clamp_rate=round(rate, 6),
    )
    return FrameStack.from_array(frames, Domain.ENVELOPE)


def true_speckle(clean: Image, stack: FrameStack) -> FrameStack:
    """
    Ground-truth speckle fields u_k = frame_k / r.

    Raises:
        ValueError: On a dimension mismatch or non-positive clean pixels
    """
    require_same_shape(clean.data, stack.as_array()[0], names=["clean", "frame"])
    require_positive(clean.data, "clean image")
    return FrameStack.from_array(stack.as_array() / clean.data[None], Domain.ESTIMATE)


def add_white_noise(stack: FrameStack, snr_db: float, seed: int = 0) -> FrameStack:
    """
    Add white Gaussian noise to every frame at the given per-frame SNR.

    Noisy values below zero are clamped so the stack stays envelope-domain.
    """
    rng = np.random.default_rng(seed)
    data = stack.as_array()
    power = np.mean(data ** 2, axis=(1, 2), keepdims=True)
    noise_std = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    noisy = data + noise_std * rng.standard_normal(data.shape)
    return FrameStack.from_array(np.clip(noisy, 0.0, None), stack.domain)
