"""Image and frame-stack containers."""
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Sequence

import numpy as np

from src.utils.validators import require_finite, require_frames


class Domain(str, Enum):
    """Which signal an array holds."""

    RF = "rf"
    ENVELOPE = "envelope"
    ESTIMATE = "estimate"

    @property
    def code(self) -> int:
        """Integer tag used by the raw file header."""
        return list(Domain).index(self)

    @classmethod
    def from_code(cls, code: int) -> "Domain":
        members = list(cls)
        if not 0 <= code < len(members):
            raise ValueError(f"Unknown domain tag {code}")
        return members[code]


def _frozen(data: np.ndarray) -> np.ndarray:
    arr = np.array(data, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Image:
    """
    A single M x N real image.

    Envelope-domain images are non-negative; RF images are signed; estimate
    images (speckle fields, SNC factors) are unrestricted but finite.
    """

    data: np.ndarray
    domain: Domain = Domain.ENVELOPE

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"Image data must be a non-empty 2-D array, got shape {arr.shape}")
        require_finite(arr, "image data")
        if Domain(self.domain) is Domain.ENVELOPE and np.any(arr < 0):
            raise ValueError("Envelope-domain image contains negative values")
        object.__setattr__(self, "data", _frozen(arr))
        object.__setattr__(self, "domain", Domain(self.domain))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray, domain: Optional[Domain] = None) -> "Image":
        """Return a new image of the same (or given) domain holding `data`."""
        return Image(data, domain or self.domain)


@dataclass(frozen=True, eq=False)
class FrameStack:
    """p co-registered frames of identical size."""

    frames: Sequence[Image]
    domain: Domain = Domain.ENVELOPE
    _array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("FrameStack needs at least one frame")
        shape = frames[0].shape
        for k, frame in enumerate(frames):
            if frame.shape != shape:
                raise ValueError(f"Frame {k} has shape {frame.shape}, expected {shape}")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "domain", Domain(self.domain))
        stacked = np.stack([f.data for f in frames])
        stacked.setflags(write=False)
        object.__setattr__(self, "_array", stacked)

    @classmethod
    def from_array(cls, data: np.ndarray, domain: Domain = Domain.ENVELOPE) -> "FrameStack":
        """Build a stack from a (p, M, N) array."""
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"Stack array must have shape (p, M, N), got {arr.shape}")
        return cls([Image(frame, domain) for frame in arr], domain)

    @property
    def p(self) -> int:
        return len(self.frames)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames[0].shape

    def as_array(self) -> np.ndarray:
        """Read-only (p, M, N) view of all frames."""
        return self._array

    def frame(self, k: int) -> Image:
        if not 0 <= k < self.p:
            raise ValueError(f"Frame index {k} out of range for p={self.p}")
        return self.frames[k]

    def temporal_mean(self) -> Image:
        return Image(self._array.mean(axis=0), self.domain)

    def scaled(self, factor: float) -> "FrameStack":
        return FrameStack.from_array(self._array * factor, self.domain)

    def require_multichannel(self):
        """Raise ValueError unless the stack has at least two frames."""
        require_frames(self.p)

    def __iter__(self) -> Iterator[Image]:
        return iter(self.frames)

    def __len__(self) -> int:
        return self.p
