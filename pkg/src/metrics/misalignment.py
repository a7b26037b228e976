"""Normalized projection misalignment."""
from typing import Union

import numpy as np

from src.imagecore.image import FrameStack, Image

from .quality import DB_FLOOR, to_db


Fields = Union[FrameStack, Image, np.ndarray]

# below this relative residual the estimate is a scaled copy of the truth
_RESOLUTION = 64 * np.finfo(np.float64).eps


def _flatten(fields: Fields) -> np.ndarray:
    if isinstance(fields, FrameStack):
        return fields.as_array().ravel()
    if isinstance(fields, Image):
        return fields.data.ravel()
    return np.asarray(fields, dtype=np.float64).ravel()


def npm(true_fields: Fields, est_fields: Fields) -> float:
    """
    Normalized projection misalignment in dB.

    rho = U - (U.T @ Uh / Uh.T @ Uh) * Uh;  NPM = 20 log10(|rho| / |U|),
    floored at -300 dB. Invariant to any non-zero scaling of the estimate.

    Raises:
        ValueError: On a size mismatch or an all-zero vector
    """
    u = _flatten(true_fields)
    u_hat = _flatten(est_fields)
    if u.shape != u_hat.shape:
        raise ValueError(f"Dimension mismatch: true has {u.size} values, estimate has {u_hat.size}")

    est_energy = float(u_hat @ u_hat)
    if est_energy == 0:
        raise ValueError("NPM undefined for an all-zero estimate")
    true_norm = float(np.linalg.norm(u))
    if true_norm == 0:
        raise ValueError("NPM undefined for an all-zero reference")

    rho = u - (float(u @ u_hat) / est_energy) * u_hat
    ratio = float(np.linalg.norm(rho)) / true_norm
    if ratio <= _RESOLUTION:
        return DB_FLOOR
    return to_db(ratio, scale=20.0)
