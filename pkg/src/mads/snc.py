"""Speckle-noise-cancellation (SNC) factor estimation."""
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field

from src.imagecore.image import Domain, FrameStack
from src.msne.estimator import SpeckleEstimate
from src.utils.logging import log_event
from src.utils.validators import DivergenceError, require_finite, require_same_shape


DESCENT_SLACK = 1e-12


class MadsConfig(BaseModel):
    """Settings of SNC estimation and the despeckling stage."""

    beta2: float = Field(0.0, ge=0.0, description="Energy-regularization weight on G")
    grad_avg_weight: float = Field(0.7, gt=0.0, le=1.0, description="Weight of the current gradient")
    max_iters: int = Field(5000, ge=1)
    tol: float = Field(1e-10, ge=0.0)
    halving_limit: int = Field(40, ge=0)
    denoiser: Literal["none", "hard_threshold"] = "none"
    denoise_level: float = Field(3.0, gt=0.0, description="Hard threshold in units of the noise estimate")


@dataclass
class SncField:
    """Per-frame SNC factors G_1..G_p."""

    factors: FrameStack
    cost_trace: List[float]
    mu_trace: List[float] = field(default_factory=list)
    iterations_used: int = 0
    fallbacks: int = 0
    converged: bool = False

    @property
    def p(self) -> int:
        return self.factors.p


Fields = Union[FrameStack, SpeckleEstimate, SncField, np.ndarray]


def _as_array(x: Fields) -> np.ndarray:
    if isinstance(x, SpeckleEstimate):
        return x.fields.as_array()
    if isinstance(x, SncField):
        return x.factors.as_array()
    if isinstance(x, FrameStack):
        return x.as_array()
    return np.asarray(x, dtype=np.float64)


def snc_cost(est_speckle: Fields, g: Fields, cfg: MadsConfig) -> float:
    """J'_eq = ||U .* G - D||_F^2 + beta2 ||G||_F^2 with D all ones."""
    u = _as_array(est_speckle)
    gv = _as_array(g)
    require_same_shape(u, gv, names=["speckle", "snc"])
    return float(np.sum((u * gv - 1.0) ** 2) + cfg.beta2 * np.sum(gv ** 2))


def snc_gradient(est_speckle: Fields, g: Fields, cfg: MadsConfig) -> np.ndarray:
    """2 (U .* G - D) .* U + 2 beta2 G."""
    u = _as_array(est_speckle)
    gv = _as_array(g)
    require_same_shape(u, gv, names=["speckle", "snc"])
    return 2.0 * (u * gv - 1.0) * u + 2.0 * cfg.beta2 * gv


def _line_search_step(u: np.ndarray, grad: np.ndarray, direction: np.ndarray, beta2: float) -> float:
    """Exact minimizer t of J'(G - t d); the cost is a diagonal quadratic in G."""
    curvature = 2.0 * float(np.sum((u ** 2 + beta2) * direction ** 2))
    if curvature == 0:
        return 0.0
    return float(np.sum(direction * grad)) / curvature


def estimate_snc(est_speckle: Fields, cfg: Optional[MadsConfig] = None) -> SncField:
    """
    Estimate SNC factors so that U .* G approaches all-ones.

    G starts at all-ones. Each iteration averages the current and previous
    gradient (the first uses the raw gradient), tries the VSS step
    ||G .* d||_S / ||d .* d||_S with halving, and falls back to the exact
    line-search step when the VSS step does not descend. The iteration ends
    when the relative cost change drops below tol or the cost falls to
    tol * initial cost.

    Raises:
        DivergenceError: If an iterate becomes non-finite
    """
    cfg = cfg or MadsConfig()
    u = _as_array(est_speckle)
    require_finite(u, "speckle estimate")
    alpha = cfg.grad_avg_weight

    g = np.ones_like(u)
    cost = snc_cost(u, g, cfg)
    initial_cost = cost
    cost_trace = [cost]
    mu_trace: List[float] = []
    previous: Optional[np.ndarray] = None
    fallbacks = 0
    converged = False
    iteration = 0

    for iteration in range(1, cfg.max_iters + 1):
        grad = snc_gradient(u, g, cfg)
        direction = grad if previous is None else alpha * grad + (1.0 - alpha) * previous
        previous = grad

        denom = float(np.sum(direction * direction))
        if denom == 0:
            converged = True
            iteration -= 1
            break

        candidate = None
        step = float(np.sum(g * direction)) / denom
        if step > 0:
            for _ in range(cfg.halving_limit + 1):
                trial = g - step * direction
                trial_cost = snc_cost(u, trial, cfg)
                if not np.isfinite(trial_cost):
                    raise DivergenceError("snc", iteration)
                if trial_cost <= cost + DESCENT_SLACK:
                    candidate, new_cost = trial, trial_cost
                    break
                step *= 0.5

        if candidate is None:
            fallbacks += 1
            if float(np.sum(direction * grad)) <= 0:
                direction = grad
            step = _line_search_step(u, grad, direction, cfg.beta2)
            candidate = g - step * direction
            new_cost = snc_cost(u, candidate, cfg)
            if not np.isfinite(new_cost):
                raise DivergenceError("snc", iteration)
            if step <= 0 or new_cost > cost + DESCENT_SLACK:
                converged = True
                iteration -= 1
                break

        change = abs(cost - new_cost) / max(abs(cost), np.finfo(np.float64).tiny)
        g = candidate
        cost = new_cost
        cost_trace.append(cost)
        mu_trace.append(step)

        if change < cfg.tol or cost <= cfg.tol * initial_cost:
            converged = True
            break

    log_event(
        "snc_finished",
        frames=u.shape[0],
        iterations=iteration,
        cost=cost,
        fallbacks=fallbacks,
        converged=converged,
        beta2=cfg.beta2,
        grad_avg_weight=alpha,
    )

    return SncField(
        factors=FrameStack.from_array(g, Domain.ESTIMATE),
        cost_trace=cost_trace,
        mu_trace=mu_trace,
        iterations_used=iteration,
        fallbacks=fallbacks,
        converged=converged,
    )
