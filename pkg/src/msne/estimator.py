"""Multiframe speckle-noise estimation (MSNE)."""
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field

from src.imagecore.image import Domain, FrameStack, Image
from src.metrics.misalignment import npm
from src.utils.logging import log_event
from src.utils.validators import DivergenceError, require_finite, require_frames, require_same_shape


DESCENT_SLACK = 1e-12


class MsneConfig(BaseModel):
    """Settings of the speckle-field estimator."""

    beta1: float = Field(0.0, ge=0.0, description="Coupling factor of the zero-lag correlation constraint")
    max_iters: int = Field(5000, ge=1)
    tol: float = Field(1e-10, ge=0.0, description="Relative cost change that ends the iteration")
    projection: Literal["every_iter"] = "every_iter"
    cost_form: Literal["quadratic", "quartic"] = "quadratic"
    step_rule: Literal["normalized", "raw"] = Field(
        "normalized",
        description="normalized: VSS on the gradient divided by each pixel's frame power; raw: VSS on the gradient",
    )
    halving_limit: int = Field(40, ge=0, description="Step halvings tried before giving up on descent")
    stall_threshold: float = Field(0.5, gt=0.0, description="final/initial cost ratio flagged as a stall")


@dataclass
class SpeckleEstimate:
    """Estimated speckle fields and the iteration history that produced them."""

    fields: FrameStack
    cost_trace: List[float]
    mu_trace: List[float] = field(default_factory=list)
    norm_trace: List[float] = field(default_factory=list)
    npm_trace: Optional[List[float]] = None
    iterations_used: int = 0
    halvings: int = 0
    sign_flips: int = 0
    converged: bool = False

    @property
    def p(self) -> int:
        return self.fields.p

    @property
    def halving_rate(self) -> float:
        """Halvings per iteration."""
        return self.halvings / max(self.iterations_used, 1)


Fields = Union[FrameStack, SpeckleEstimate, np.ndarray]


def _as_array(x: Fields) -> np.ndarray:
    if isinstance(x, SpeckleEstimate):
        return x.fields.as_array()
    if isinstance(x, FrameStack):
        return x.as_array()
    return np.asarray(x, dtype=np.float64)


def _check_pair_index(i: int, j: int, p: int):
    if not (0 <= i < j < p):
        raise ValueError(f"Frame indices must satisfy 0 <= i < j < p={p}, got i={i}, j={j}")


def cross_error(stack: FrameStack, est: Fields, i: int, j: int) -> Image:
    """E_ij = H_i * U_j - H_j * U_i (elementwise), 0-based with i < j."""
    h = _as_array(stack)
    u = _as_array(est)
    require_same_shape(h, u, names=["stack", "estimate"])
    _check_pair_index(i, j, h.shape[0])
    return Image(h[i] * u[j] - h[j] * u[i], Domain.ESTIMATE)


def _perpendicular(h: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Per pixel, split u against the frame vector h.

    Returns (S2, u_perp) with S2 = sum_k h_k**2 and u_perp the part of u
    orthogonal to h. sum_{i<j} (h_i u_j - h_j u_i)**2 = S2 * |u_perp|**2.
    """
    s2 = np.sum(h ** 2, axis=0)
    t = np.sum(h * u, axis=0)
    coef = np.divide(t, s2, out=np.zeros_like(t), where=s2 > 0)
    return s2, u - coef[None] * h


def _quadratic_cost(h: np.ndarray, u: np.ndarray) -> float:
    s2, u_perp = _perpendicular(h, u)
    return float(np.sum(s2[None] * u_perp ** 2))


def _quartic_cost(h: np.ndarray, u: np.ndarray) -> float:
    p = h.shape[0]
    total = 0.0
    for i in range(p - 1):
        for j in range(i + 1, p):
            total += float(np.sum((h[i] * u[j] - h[j] * u[i]) ** 4))
    return total


def msne_cost(stack: FrameStack, est: Fields, cost_form: str = "quadratic") -> float:
    """
    Cross-relation cost over all frame pairs.

    quadratic: sum_{i<j} ||E_ij||_F^2
    quartic:   sum_{i<j} ||E_ij .* E_ij||_F^2
    """
    h = _as_array(stack)
    u = _as_array(est)
    require_same_shape(h, u, names=["stack", "estimate"])
    require_frames(h.shape[0])
    if cost_form == "quartic":
        return _quartic_cost(h, u)
    return _quadratic_cost(h, u)


def corr_constraint(stack: FrameStack, est: Fields, k: int) -> float:
    """Zero-lag correlation ||H_k .* U_k||_S of frame k (0-based)."""
    h = _as_array(stack)
    u = _as_array(est)
    if not 0 <= k < h.shape[0]:
        raise ValueError(f"Frame index {k} out of range for p={h.shape[0]}")
    return float(np.sum(h[k] * u[k]))


def _raw_gradient(h: np.ndarray, u: np.ndarray, cost_form: str) -> np.ndarray:
    if cost_form == "quartic":
        grad = np.zeros_like(u)
        p = h.shape[0]
        for i in range(p - 1):
            for j in range(i + 1, p):
                e3 = (h[i] * u[j] - h[j] * u[i]) ** 3
                grad[j] += 4.0 * e3 * h[i]
                grad[i] -= 4.0 * e3 * h[j]
        return grad

    s2, u_perp = _perpendicular(h, u)
    return 2.0 * s2[None] * u_perp


def msne_gradient(stack: FrameStack, est: Fields, cfg: MsneConfig) -> np.ndarray:
    """
    Gradient of the constrained cost J - beta1 * sum_k J_corr,k.

    Returns:
        (p, M, N) array, one gradient field per frame
    """
    h = _as_array(stack)
    u = _as_array(est)
    require_same_shape(h, u, names=["stack", "estimate"])
    grad = _raw_gradient(h, u, cfg.cost_form)
    if cfg.beta1 > 0:
        grad = grad - cfg.beta1 * h
    return grad


def _constrained_cost(h: np.ndarray, u: np.ndarray, cfg: MsneConfig) -> float:
    cost = _quartic_cost(h, u) if cfg.cost_form == "quartic" else _quadratic_cost(h, u)
    if cfg.beta1 > 0:
        cost -= cfg.beta1 * float(np.sum(h * u))
    return cost


def _power_normalized(h: np.ndarray, grad: np.ndarray, cost_form: str) -> np.ndarray:
    """Divide each pixel's gradient by its frame power S2 (S2**2 for the quartic form)."""
    power = np.sum(h ** 2, axis=0)
    if cost_form == "quartic":
        power = power ** 2
    return np.divide(grad, power[None], out=np.zeros_like(grad), where=power[None] > 0)


def vss(est: Fields, grad: np.ndarray) -> Optional[float]:
    """
    Variable step size ||U .* grad||_S / ||grad .* grad||_S.

    Returns:
        The step, or None when the gradient vanishes (converged)
    """
    u = _as_array(est)
    g = np.asarray(grad, dtype=np.float64)
    denom = float(np.sum(g * g))
    if denom == 0:
        return None
    return float(np.sum(u * g)) / denom


def estimate_speckle(
    stack: FrameStack,
    cfg: Optional[MsneConfig] = None,
    truth: Optional[FrameStack] = None,
) -> SpeckleEstimate:
    """
    Estimate per-frame speckle fields by projected VSS gradient descent.

    U starts at all-ones scaled to unit Frobenius norm. Each iteration steps
    along the gradient of the constrained cost with the VSS step (halved
    while the cost would rise) and renormalizes U to unit norm.

    With step_rule "normalized" the direction is the gradient divided per
    pixel by the frame power, so the VSS step on the quadratic form lands on
    the per-pixel projection onto the frame vector and needs no halving.
    The iteration also ends once the unconstrained cost falls to
    tol * initial cost. A negative VSS step while beta1 > 0 is counted in
    `sign_flips`; its absolute value is used.

    Args:
        stack: Envelope-domain FrameStack, p >= 2
        cfg: Estimator settings
        truth: True speckle fields; when given an NPM trace is recorded

    Returns:
        SpeckleEstimate

    Raises:
        ValueError: If p < 2 or the stack holds non-finite values
        DivergenceError: If an iterate becomes non-finite
    """
    cfg = cfg or MsneConfig()
    stack.require_multichannel()
    h = stack.as_array()
    require_finite(h, "stack")
    if truth is not None:
        require_same_shape(h, truth.as_array(), names=["stack", "truth"])

    u = np.ones_like(h)
    u /= np.linalg.norm(u)

    cost = _constrained_cost(h, u, cfg)
    initial_cost = cost
    cost_trace = [cost]
    mu_trace: List[float] = []
    norm_trace = [float(np.linalg.norm(u))]
    npm_trace = [npm(truth, u)] if truth is not None else None
    halvings = 0
    sign_flips = 0
    converged = False
    iteration = 0

    for iteration in range(1, cfg.max_iters + 1):
        grad = _raw_gradient(h, u, cfg.cost_form)
        if cfg.beta1 > 0:
            grad -= cfg.beta1 * h
        if cfg.step_rule == "normalized":
            grad = _power_normalized(h, grad, cfg.cost_form)

        mu = vss(u, grad)
        if mu is None:
            converged = True
            iteration -= 1
            break
        if mu < 0 and cfg.beta1 > 0:
            sign_flips += 1
        step = abs(mu)

        accepted = False
        for _ in range(cfg.halving_limit + 1):
            candidate = u - step * grad
            norm = np.linalg.norm(candidate)
            if not np.isfinite(norm):
                raise DivergenceError("msne", iteration)
            if norm > 0:
                candidate /= norm
                new_cost = _constrained_cost(h, candidate, cfg)
                if not np.isfinite(new_cost):
                    raise DivergenceError("msne", iteration)
                if new_cost <= cost + DESCENT_SLACK:
                    accepted = True
                    break
            step *= 0.5
            halvings += 1

        if not accepted:
            converged = True
            iteration -= 1
            break

        change = abs(cost - new_cost) / max(abs(cost), np.finfo(np.float64).tiny)
        u = candidate
        cost = new_cost
        cost_trace.append(cost)
        mu_trace.append(step)
        norm_trace.append(float(np.linalg.norm(u)))
        if npm_trace is not None:
            npm_trace.append(npm(truth, u))

        if change < cfg.tol or cost == 0:
            converged = True
            break
        if cfg.beta1 == 0 and cost <= cfg.tol * initial_cost:
            converged = True
            break

    if converged and initial_cost > 0 and cfg.beta1 == 0 and cost / initial_cost > cfg.stall_threshold:
        log_event(
            "msne_stalled",
            level="warning",
            cost_ratio=cost / initial_cost,
            iterations=iteration,
            hint="frames may share common zeros; try more frames",
        )

    log_event(
        "msne_finished",
        frames=stack.p,
        iterations=iteration,
        cost=cost,
        halvings=halvings,
        sign_flips=sign_flips,
        converged=converged,
        cost_form=cfg.cost_form,
        step_rule=cfg.step_rule,
        beta1=cfg.beta1,
        npm_db=npm_trace[-1] if npm_trace else None,
    )

    return SpeckleEstimate(
        fields=FrameStack.from_array(u, Domain.ESTIMATE),
        cost_trace=cost_trace,
        mu_trace=mu_trace,
        norm_trace=norm_trace,
        npm_trace=npm_trace,
        iterations_used=iteration,
        halvings=halvings,
        sign_flips=sign_flips,
        converged=converged,
    )


def write_trace_csv(estimate: SpeckleEstimate, path: Union[str, Path]):
    """Write (iteration, cost, mu, npm_db) rows; mu is blank for the start point."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["iteration", "cost", "mu", "npm_db"])
        writer.writeheader()
        for q, cost in enumerate(estimate.cost_trace):
            writer.writerow({
                "iteration": q,
                "cost": repr(cost),
                "mu": repr(estimate.mu_trace[q - 1]) if q > 0 else "",
                "npm_db": repr(estimate.npm_trace[q]) if estimate.npm_trace else "",
            })
