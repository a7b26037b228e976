"""Display-chain post-processing: gamma, gray-level transform, log compression."""
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.imagecore.image import Domain, Image


DisplayOrder = Literal["none", "log-first", "log-last"]


class DisplayParams(BaseModel):
    """Contrast and brightness settings of the display chain."""

    gamma: float = Field(0.97, gt=0.0)
    w_low: float = Field(1e-2, ge=0.0, lt=1.0)
    w_high: float = Field(0.98, gt=0.0, lt=1.0)
    dynamic_range_db: float = Field(35.0, gt=0.0)

    @model_validator(mode="after")
    def _check_window(self):
        if self.w_low >= self.w_high:
            raise ValueError(f"w_low must be < w_high, got w_low={self.w_low}, w_high={self.w_high}")
        return self


def _peak(data: np.ndarray, name: str) -> float:
    if np.any(data < 0):
        raise ValueError(f"{name} must be non-negative")
    peak = float(data.max())
    if peak <= 0:
        raise ValueError(f"{name} is all zero")
    return peak


def gamma_correct(img: Image, gamma: float) -> Image:
    """I = (r / max r) ** gamma, in [0, 1]."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    peak = _peak(img.data, "gamma input")
    return Image((img.data / peak) ** gamma, Domain.ENVELOPE)


def gray_transform(img: Image, w_low: float, w_high: float) -> Image:
    """
    Piecewise gray-level window.

    0 below w_low, 1 above w_high, and (I / max I - w_low) / (w_high - w_low)
    in between.
    """
    if w_low >= w_high:
        raise ValueError(f"w_low must be < w_high, got w_low={w_low}, w_high={w_high}")
    normalized = img.data / _peak(img.data, "gray transform input")
    ramp = (normalized - w_low) / (w_high - w_low)
    out = np.where(normalized < w_low, 0.0, np.where(normalized > w_high, 1.0, ramp))
    return Image(np.clip(out, 0.0, 1.0), Domain.ENVELOPE)


def log_compress(env: Image, dynamic_range_db: float) -> Image:
    """20 log10(env / max) clipped to [-DR, 0] and mapped linearly onto [0, 1]."""
    if dynamic_range_db <= 0:
        raise ValueError(f"dynamic range must be positive, got {dynamic_range_db}")
    peak = _peak(env.data, "log compression input")
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(env.data / peak)
    db = np.clip(db, -dynamic_range_db, 0.0)
    return Image((db + dynamic_range_db) / dynamic_range_db, Domain.ENVELOPE)


def display_chain(img: Image, params: DisplayParams, order: DisplayOrder = "none") -> Image:
    """gamma -> gray transform, with log compression before or after when asked."""
    if order not in ("none", "log-first", "log-last"):
        raise ValueError(f"Unknown display order '{order}'")

    out = img
    if order == "log-first":
        out = log_compress(out, params.dynamic_range_db)
    out = gamma_correct(out, params.gamma)
    out = gray_transform(out, params.w_low, params.w_high)
    if order == "log-last":
        out = log_compress(out, params.dynamic_range_db)
    return out
