"""Data types for blind deconvolution."""
import math
from dataclasses import dataclass, field
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.imagecore.image import Image


Direction = Literal["axial", "lateral"]


class DeconvConfig(BaseModel):
    """Settings of both bMCFLMS passes and the cepstral alternative."""

    max_iters: int = Field(2000, ge=1)
    tol: float = Field(1e-8, ge=0.0, description="Relative cost change that ends the iteration")
    axial_blocks: int = Field(2, ge=1)
    lateral_blocks: int = Field(1, ge=1)
    axial_psf_length: int = Field(8, ge=1)
    lateral_psf_length: int = Field(4, ge=1)
    error_window: Literal["linear", "circular"] = "linear"
    search: Literal["gradient", "locally_optimal"] = "gradient"
    halving_limit: int = Field(40, ge=0)
    lifter_cutoff: int = Field(16, ge=1)
    noise_floor: float = Field(1e-3, gt=0.0)


class BlockPlan(BaseModel):
    """
    Split of one pass into B contiguous TRF blocks of length L_b.

    The TRF spans signal_length - psf_length + 1 samples. Block b estimates
    TRF samples [b*L_b, (b+1)*L_b) from the observation window
    [b*L_b, b*L_b + L_b + psf_length - 1); the last block is zero padded.
    """

    blocks: int = Field(..., ge=1)
    block_length: int = Field(..., ge=1)
    psf_length: int = Field(..., ge=1)
    signal_length: int = Field(..., ge=1)
    direction: Direction = "axial"

    @property
    def trf_length(self) -> int:
        return self.signal_length - self.psf_length + 1

    @property
    def window_length(self) -> int:
        return self.block_length + self.psf_length - 1

    @model_validator(mode="after")
    def _check_cover(self):
        if self.trf_length < 1:
            raise ValueError(
                f"psf_length {self.psf_length} leaves no TRF samples in a signal of length {self.signal_length}"
            )
        if self.blocks * self.block_length < self.trf_length:
            raise ValueError(
                f"{self.blocks} blocks of length {self.block_length} do not cover {self.trf_length} TRF samples"
            )
        return self

    def window(self, signal: np.ndarray, b: int) -> np.ndarray:
        """Observation window of block b for a (length, channels) array, zero padded."""
        start = b * self.block_length
        chunk = signal[start:start + self.window_length]
        if chunk.shape[0] < self.window_length:
            pad = np.zeros((self.window_length - chunk.shape[0],) + chunk.shape[1:])
            chunk = np.concatenate([chunk, pad], axis=0)
        return chunk


def plan_blocks(signal_length: int, blocks: int, psf_length: int, direction: Direction = "axial") -> BlockPlan:
    """Equal-length block plan covering the TRF of a signal."""
    trf_length = signal_length - psf_length + 1
    if trf_length < blocks:
        raise ValueError(
            f"Cannot split {trf_length} TRF samples into {blocks} blocks "
            f"(signal length {signal_length}, psf length {psf_length})"
        )
    return BlockPlan(
        blocks=blocks,
        block_length=math.ceil(trf_length / blocks),
        psf_length=psf_length,
        signal_length=signal_length,
        direction=direction,
    )


@dataclass(frozen=True, eq=False)
class Psf1D:
    """Axial or lateral 1-D point-spread function."""

    taps: np.ndarray
    direction: Direction = "axial"

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64, copy=True).ravel()
        if taps.size < 1:
            raise ValueError("PSF needs at least one tap")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def length(self) -> int:
        return self.taps.size

    @property
    def peak_index(self) -> int:
        return int(np.argmax(np.abs(self.taps)))


@dataclass
class TrfEstimate:
    """Result of one bMCFLMS pass."""

    image: Image
    trf: np.ndarray
    unit_trf: np.ndarray
    psfs: List[Psf1D]
    offset: int
    cost_trace: List[float]
    norm_trace: List[float] = field(default_factory=list)
    mu_trace: List[float] = field(default_factory=list)
    npm_trace: Optional[List[float]] = None
    iterations_used: int = 0
    converged: bool = False
