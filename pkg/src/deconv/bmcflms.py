"""Block-based multichannel blind deconvolution (bMCFLMS).

Channels are A-lines (columns) in the axial pass and rows in the lateral
pass. For channels x_i = s * h_i sharing one PSF s, the cross-relation
x_i * h_j = x_j * h_i holds for every pair, so the TRF is the minimizer of

    J = sum_{i<j} ||x_i * h_j - x_j * h_i||^2      subject to ||h|| = 1.

Per frequency bin the pair sum collapses to P * Q - |T|^2 with
P = sum |X_i|^2, Q = sum |H_i|^2 and T = sum X_i conj(H_i), which makes J a
quadratic form h' A h evaluated entirely with FFTs.
"""
from typing import List, Optional, Union

import numpy as np
from scipy import fft as spfft
from scipy.linalg import convolution_matrix, eigh

from src.imagecore.image import Domain, Image
from src.metrics.misalignment import npm
from src.utils.logging import log_event
from src.utils.validators import DivergenceError, require_finite

from .models import BlockPlan, DeconvConfig, Psf1D, TrfEstimate, plan_blocks


DESCENT_SLACK = 1e-12

Lines = Union[Image, np.ndarray]


class _BlockOperator:
    """Applies the cross-relation quadratic form A of one block."""

    def __init__(self, window: np.ndarray, block_length: int, error_window: str):
        x = np.asarray(window, dtype=np.float64).T
        window_length = x.shape[1]
        if error_window == "circular":
            self.n = window_length
        else:
            self.n = spfft.next_fast_len(window_length + block_length - 1)
        self.block_length = block_length
        self.spectra = spfft.fft(x, self.n, axis=1)
        self.power = np.sum(np.abs(self.spectra) ** 2, axis=0)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """A v for a (channels, block_length) coefficient array."""
        coeffs = spfft.fft(v, self.n, axis=1)
        cross = np.sum(self.spectra * np.conj(coeffs), axis=0)
        w = self.power[None] * coeffs - np.conj(cross)[None] * self.spectra
        return spfft.ifft(w, axis=1).real[:, :self.block_length]


class _BlockState:
    def __init__(self, op: _BlockOperator, channels: int):
        self.op = op
        v = np.zeros((channels, op.block_length))
        v[:, 0] = 1.0
        self.v = v / np.linalg.norm(v)
        self.av = op.apply(self.v)
        self.cost = float(np.sum(self.v * self.av))
        self.direction: Optional[np.ndarray] = None
        self.done = False
        self.halvings = 0


def _orthonormal_basis(vectors: List[np.ndarray]) -> List[np.ndarray]:
    basis: List[np.ndarray] = []
    for vec in vectors:
        scale = np.linalg.norm(vec)
        if scale == 0:
            continue
        q = vec.copy()
        for _ in range(2):
            for b in basis:
                q -= np.sum(b * q) * b
        norm = np.linalg.norm(q)
        if norm > 1e-10 * scale:
            basis.append(q / norm)
    return basis


def _step(state: _BlockState, search: str, halving_limit: int) -> Optional[float]:
    """
    One Rayleigh-Ritz update on the unit sphere.

    The new estimate minimizes the cost over span{h, tangent gradient} (plus
    the previous direction for the locally optimal search); it is unit norm
    by construction. Returns the rotation angle, or None when no descent is
    possible.
    """
    v = state.v
    grad = 2.0 * state.av
    tangent = grad - np.sum(v * grad) * v
    if np.linalg.norm(tangent) <= 1e-14 * max(np.linalg.norm(grad), 1e-300):
        return None

    candidates = [v, tangent]
    if search == "locally_optimal" and state.direction is not None:
        candidates.append(state.direction)
    basis = _orthonormal_basis(candidates)
    images = [state.av] + [state.op.apply(b) for b in basis[1:]]

    k = len(basis)
    small = np.array([[np.sum(basis[i] * images[j]) for j in range(k)] for i in range(k)])
    _, vecs = eigh(0.5 * (small + small.T))
    y = vecs[:, 0]
    if y[0] < 0:
        y = -y

    target = sum(coef * b for coef, b in zip(y, basis))
    target /= np.linalg.norm(target)

    t = 1.0
    for _ in range(halving_limit + 1):
        new_v = v + t * (target - v)
        norm = np.linalg.norm(new_v)
        if not np.isfinite(norm) or norm == 0:
            return None
        new_v /= norm
        new_av = state.op.apply(new_v)
        new_cost = float(np.sum(new_v * new_av))
        if new_cost <= state.cost + DESCENT_SLACK:
            break
        t *= 0.5
        state.halvings += 1
    else:
        return None

    angle = float(np.arccos(np.clip(abs(np.sum(v * new_v)), 0.0, 1.0)))
    state.direction = sum(coef * b for coef, b in zip(y[1:], basis[1:])) if k > 1 else None
    state.v, state.av, state.cost = new_v, new_av, new_cost
    return angle


def _as_lines(lines: Lines) -> np.ndarray:
    data = np.asarray(lines.data if isinstance(lines, Image) else lines, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError(f"Channel data must be 2-D (length, channels), got shape {data.shape}")
    return data


def _stacked_unit(states: List[_BlockState]) -> np.ndarray:
    scale = 1.0 / np.sqrt(len(states))
    return np.concatenate([s.v.T for s in states], axis=0) * scale


def _fit_psf(window: np.ndarray, trf_block: np.ndarray, psf_length: int) -> np.ndarray:
    """Least-squares PSF such that window[:, c] ~ trf_block[:, c] * s for all c."""
    design = np.vstack([
        convolution_matrix(trf_block[:, c], psf_length, mode="full")
        for c in range(trf_block.shape[1])
    ])
    target = window.T.ravel()
    taps, *_ = np.linalg.lstsq(design, target, rcond=None)
    return taps


def cross_relation_cost(lines: Lines, trf: np.ndarray) -> float:
    """
    Direct pairwise sum_{i<j} ||x_i * h_j - x_j * h_i||^2 with linear convolution.

    Args:
        lines: (length, channels) observations
        trf: (trf_length, channels) TRF candidates
    """
    x = _as_lines(lines)
    h = np.asarray(trf, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != x.shape[1]:
        raise ValueError(f"TRF shape {h.shape} does not match {x.shape[1]} channels")
    total = 0.0
    for i in range(x.shape[1] - 1):
        for j in range(i + 1, x.shape[1]):
            residual = np.convolve(x[:, i], h[:, j]) - np.convolve(x[:, j], h[:, i])
            total += float(np.sum(residual ** 2))
    return total


def bmcflms_pass(
    lines: Lines,
    plan: BlockPlan,
    cfg: Optional[DeconvConfig] = None,
    truth: Optional[np.ndarray] = None,
) -> TrfEstimate:
    """
    Blindly estimate the TRF of every channel in one direction.

    Args:
        lines: (length, channels) data, one channel per column
        plan: Block split along the channel length
        cfg: Iteration settings
        truth: (trf_length, channels) true TRF; when given an NPM trace is recorded

    Returns:
        TrfEstimate with the gain-fixed TRF aligned to the input grid

    Raises:
        ValueError: Fewer than 2 channels, all-zero input, or plan mismatch
        DivergenceError: If an iterate becomes non-finite
    """
    cfg = cfg or DeconvConfig()
    x = _as_lines(lines)
    require_finite(x, "channel data")
    length, channels = x.shape
    if channels < 2:
        raise ValueError(f"At least 2 channels required, got {channels}")
    if not np.any(x):
        raise ValueError("Degenerate input: every channel is all-zero")
    if plan.signal_length != length:
        raise ValueError(f"Block plan is for length {plan.signal_length}, channels have length {length}")

    windows = [plan.window(x, b) for b in range(plan.blocks)]
    states = [_BlockState(_BlockOperator(w, plan.block_length, cfg.error_window), channels) for w in windows]

    def total_cost() -> float:
        return sum(s.cost for s in states) / plan.blocks

    def record_npm() -> float:
        return npm(truth, _stacked_unit(states)[:plan.trf_length])

    cost = total_cost()
    cost_trace = [cost]
    norm_trace = [float(np.linalg.norm(_stacked_unit(states)))]
    mu_trace: List[float] = []
    npm_trace = [record_npm()] if truth is not None else None
    converged = False
    iteration = 0

    for iteration in range(1, cfg.max_iters + 1):
        angles = []
        for state in states:
            if state.done:
                continue
            angle = _step(state, cfg.search, cfg.halving_limit)
            if angle is None:
                state.done = True
            else:
                angles.append(angle)

        new_cost = total_cost()
        if not np.isfinite(new_cost):
            raise DivergenceError(f"bmcflms-{plan.direction}", iteration)

        change = abs(cost - new_cost) / max(abs(cost), np.finfo(np.float64).tiny)
        cost = new_cost
        cost_trace.append(cost)
        norm_trace.append(float(np.linalg.norm(_stacked_unit(states))))
        mu_trace.append(float(np.mean(angles)) if angles else 0.0)
        if npm_trace is not None:
            npm_trace.append(record_npm())

        if all(s.done for s in states) or change < cfg.tol or cost == 0:
            converged = True
            break

    unit = _stacked_unit(states)
    psfs: List[Psf1D] = []
    blocks = []
    for b, window in enumerate(windows):
        block = unit[b * plan.block_length:(b + 1) * plan.block_length]
        taps = _fit_psf(window, block, plan.psf_length)
        peak = taps[np.argmax(np.abs(taps))]
        gain = float(np.linalg.norm(taps) * np.sign(peak))
        if gain == 0 or not np.isfinite(gain):
            gain = 1.0
        psfs.append(Psf1D(taps / gain, plan.direction))
        blocks.append(block * gain)

    trf = np.concatenate(blocks, axis=0)[:plan.trf_length]
    offset = psfs[0].peak_index
    aligned = np.zeros((length, channels))
    aligned[offset:offset + plan.trf_length] = trf

    log_event(
        "bmcflms_finished",
        direction=plan.direction,
        channels=channels,
        blocks=plan.blocks,
        iterations=iteration,
        cost=cost,
        converged=converged,
        npm_db=npm_trace[-1] if npm_trace else None,
    )

    return TrfEstimate(
        image=Image(aligned, Domain.RF),
        trf=trf,
        unit_trf=unit,
        psfs=psfs,
        offset=offset,
        cost_trace=cost_trace,
        norm_trace=norm_trace,
        mu_trace=mu_trace,
        npm_trace=npm_trace,
        iterations_used=iteration,
        converged=converged,
    )


def deconvolve_1d(rf: Image, cfg: Optional[DeconvConfig] = None) -> Image:
    """Axial pass only: A-lines (columns) are the channels."""
    cfg = cfg or DeconvConfig()
    plan = plan_blocks(rf.rows, cfg.axial_blocks, cfg.axial_psf_length, "axial")
    return bmcflms_pass(rf, plan, cfg).image


def deconvolve_2d_passes(rf: Image, cfg: Optional[DeconvConfig] = None) -> tuple[TrfEstimate, TrfEstimate]:
    """Axial pass over columns, then lateral pass over the rows of its output."""
    cfg = cfg or DeconvConfig()
    axial_plan = plan_blocks(rf.rows, cfg.axial_blocks, cfg.axial_psf_length, "axial")
    axial = bmcflms_pass(rf, axial_plan, cfg)

    lateral_plan = plan_blocks(rf.cols, cfg.lateral_blocks, cfg.lateral_psf_length, "lateral")
    lateral = bmcflms_pass(axial.image.data.T, lateral_plan, cfg)
    return axial, lateral


def deconvolve_2d(rf: Image, cfg: Optional[DeconvConfig] = None) -> Image:
    """
    Two-pass blind deconvolution of an RF image.

    Returns:
        Estimated TRF, same shape as `rf`
    """
    _, lateral = deconvolve_2d_passes(rf, cfg)
    return Image(lateral.image.data.T, Domain.RF)
