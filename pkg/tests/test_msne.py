"""Tests for multiframe speckle-noise estimation."""
import numpy as np
import pytest

from src.imagecore.image import Domain, FrameStack, Image
from src.metrics.misalignment import npm
from src.msne.estimator import (
    MsneConfig,
    corr_constraint,
    cross_error,
    estimate_speckle,
    msne_cost,
    msne_gradient,
    vss,
    write_trace_csv,
)
from src.specklesim.synth import SpeckleParams, synthesize_frames, true_speckle


def _finite_difference(cost, u, step=1e-6):
    grad = np.zeros_like(u)
    for idx in np.ndindex(u.shape):
        plus = u.copy()
        minus = u.copy()
        plus[idx] += step
        minus[idx] -= step
        grad[idx] = (cost(plus) - cost(minus)) / (2 * step)
    return grad


def test_cross_error_zero_at_truth(noiseless_stack, true_fields):
    """Test the cross-relation error vanishes at the true speckle."""
    for i, j in [(0, 1), (0, 2), (1, 2)]:
        assert np.max(np.abs(cross_error(noiseless_stack, true_fields, i, j).data)) <= 1e-12


def test_cross_error_with_unit_estimate(noiseless_stack):
    """Test all-ones fields give frame_i - frame_j."""
    ones = np.ones((3, 8, 8))

    e = cross_error(noiseless_stack, ones, 0, 2)

    assert np.allclose(e.data, noiseless_stack.frame(0).data - noiseless_stack.frame(2).data)


def test_cross_error_direct_formula(rng):
    """Test a random 3x3 case against elementwise evaluation."""
    h = rng.uniform(0.1, 1, size=(3, 3, 3))
    u = rng.standard_normal((3, 3, 3))
    stack = FrameStack.from_array(h)

    e = cross_error(stack, u, 1, 2)

    for m in range(3):
        for n in range(3):
            assert e.data[m, n] == pytest.approx(h[1, m, n] * u[2, m, n] - h[2, m, n] * u[1, m, n])


@pytest.mark.parametrize("pair", [(1, 1), (2, 1), (-1, 1), (0, 3)])
def test_cross_error_bad_indices(noiseless_stack, pair):
    """Test invalid frame pairs raise."""
    with pytest.raises(ValueError):
        cross_error(noiseless_stack, np.ones((3, 8, 8)), *pair)


@pytest.mark.parametrize("cost_form", ["quadratic", "quartic"])
def test_cost_zero_at_truth(noiseless_stack, true_fields, cost_form):
    """Test the cost is zero at the true speckle."""
    assert msne_cost(noiseless_stack, true_fields, cost_form) == pytest.approx(0.0, abs=1e-20)


@pytest.mark.parametrize("cost_form", ["quadratic", "quartic"])
def test_cost_scalar_example(cost_form):
    """Test h1=2, h2=3, u=1 gives E=-1 and J=1."""
    stack = FrameStack.from_array(np.array([[[2.0]], [[3.0]]]))

    assert msne_cost(stack, np.ones((2, 1, 1)), cost_form) == pytest.approx(1.0)


@pytest.mark.parametrize("cost_form", ["quadratic", "quartic"])
def test_cost_frame_order_symmetric(rng, cost_form):
    """Test reordering frames (and fields) leaves the cost unchanged."""
    h = rng.uniform(0.5, 1.5, size=(3, 4, 4))
    u = rng.uniform(0.5, 1.5, size=(3, 4, 4))
    order = [2, 0, 1]

    a = msne_cost(FrameStack.from_array(h), u, cost_form)
    b = msne_cost(FrameStack.from_array(h[order]), u[order], cost_form)

    assert a == pytest.approx(b, rel=1e-12)


def test_quadratic_cost_matches_pair_sum(rng):
    """Test the per-pixel closed form equals the explicit pair sum."""
    h = rng.uniform(0.5, 1.5, size=(4, 5, 5))
    u = rng.standard_normal((4, 5, 5))
    stack = FrameStack.from_array(h)

    direct = sum(
        np.sum(cross_error(stack, u, i, j).data ** 2) for i in range(4) for j in range(i + 1, 4)
    )

    assert msne_cost(stack, u, "quadratic") == pytest.approx(direct, rel=1e-10)


@pytest.mark.parametrize("cost_form", ["quadratic", "quartic"])
@pytest.mark.parametrize("beta1", [0.0, 0.3])
def test_gradient_matches_finite_differences(rng, cost_form, beta1):
    """Test the analytic gradient against central differences on 4x4, p=3."""
    h = rng.uniform(0.5, 1.5, size=(3, 4, 4))
    u = rng.uniform(0.5, 1.5, size=(3, 4, 4))
    stack = FrameStack.from_array(h)
    cfg = MsneConfig(cost_form=cost_form, beta1=beta1)

    def cost(x):
        return msne_cost(stack, x, cost_form) - beta1 * sum(corr_constraint(stack, x, k) for k in range(3))

    analytic = msne_gradient(stack, u, cfg)
    numeric = _finite_difference(cost, u)

    assert np.max(np.abs(analytic - numeric)) / np.max(np.abs(analytic)) <= 1e-5


def test_gradient_zero_at_truth(noiseless_stack, true_fields):
    """Test the gradient vanishes at the noiseless minimum."""
    grad = msne_gradient(noiseless_stack, true_fields, MsneConfig())

    assert np.max(np.abs(grad)) <= 1e-12


def test_beta1_adds_frame_term(rng):
    """Test beta1 > 0 subtracts exactly beta1 * H_k."""
    h = rng.uniform(0.5, 1.5, size=(2, 3, 3))
    u = rng.standard_normal((2, 3, 3))
    stack = FrameStack.from_array(h)

    plain = msne_gradient(stack, u, MsneConfig())
    coupled = msne_gradient(stack, u, MsneConfig(beta1=0.25))

    assert np.allclose(plain - coupled, 0.25 * h)


def test_vss_examples(rng):
    """Test grad = U gives 1 and grad = 2U gives 1/2."""
    u = rng.standard_normal((2, 3, 3))

    assert vss(u, u) == pytest.approx(1.0)
    assert vss(u, 2 * u) == pytest.approx(0.5)


def test_vss_direct_formula(rng):
    """Test a random 2x2, p=2 case."""
    u = rng.standard_normal((2, 2, 2))
    g = rng.standard_normal((2, 2, 2))

    assert vss(u, g) == pytest.approx(np.sum(u * g) / np.sum(g * g))


def test_vss_zero_gradient_signals_convergence():
    """Test a zero gradient returns None."""
    assert vss(np.ones((2, 2, 2)), np.zeros((2, 2, 2))) is None


def test_corr_constraint_examples(noiseless_stack, rng):
    """Test the zero-lag correlation on simple fields."""
    assert corr_constraint(noiseless_stack, np.zeros((3, 8, 8)), 0) == 0.0
    assert corr_constraint(noiseless_stack, np.ones((3, 8, 8)), 1) == pytest.approx(noiseless_stack.frame(1).data.sum())

    u = rng.standard_normal((3, 8, 8))
    expected = np.sum(noiseless_stack.frame(2).data * u[2])
    assert corr_constraint(noiseless_stack, u, 2) == pytest.approx(expected)


def test_corr_constraint_bad_index(noiseless_stack):
    """Test an out-of-range frame index raises."""
    with pytest.raises(ValueError):
        corr_constraint(noiseless_stack, np.ones((3, 8, 8)), 3)


def test_noiseless_recovery(bright_clean, speckled_stack):
    """Test synthesized frames without additive noise give at most -30 dB NPM."""
    truth = true_speckle(bright_clean, speckled_stack)

    estimate = estimate_speckle(speckled_stack, MsneConfig(max_iters=2000), truth=truth)

    assert npm(truth, estimate.fields) <= -30.0
    assert estimate.npm_trace[-1] <= -30.0
    assert estimate.converged
    assert estimate.iterations_used <= 5


def test_unit_scale_stack_keeps_pixel_scale_ambiguity(rng):
    """Test a unit-scale stack reaches zero cost while the fields stay misaligned."""
    clean = Image(rng.uniform(0.5, 1.5, size=(8, 8)), Domain.ENVELOPE)
    stack = synthesize_frames(clean, SpeckleParams(sigma=0.2, p=3, seed=3))
    truth = true_speckle(clean, stack)

    estimate = estimate_speckle(stack, MsneConfig(max_iters=2000), truth=truth)

    assert estimate.cost_trace[-1] <= 1e-10 * estimate.cost_trace[0]
    assert npm(truth, estimate.fields) > -25.0


def test_normalized_step_rarely_halves(bright_phantom):
    """Test the accepted step needs halving in at most 5% of iterations."""
    stack = synthesize_frames(bright_phantom, SpeckleParams(sigma=0.2, p=5, seed=7))

    estimate = estimate_speckle(stack, MsneConfig())

    assert estimate.halving_rate <= 0.05
    assert estimate.converged
    assert estimate.iterations_used <= 5


def test_normalized_step_lands_on_frame_projection(rng):
    """Test one normalized step maps each pixel's fields onto its frame vector."""
    h = rng.uniform(0.5, 1.5, size=(3, 4, 4))
    stack = FrameStack.from_array(h)

    estimate = estimate_speckle(stack, MsneConfig(max_iters=1))

    u = estimate.fields.as_array()
    ratio = u / h
    assert np.allclose(ratio, ratio[0][None], rtol=1e-10)
    assert estimate.mu_trace[0] == pytest.approx(0.5)
    assert estimate.halvings == 0


def test_raw_step_rule_still_descends(noiseless_stack):
    """Test the raw-gradient step keeps a non-increasing cost."""
    estimate = estimate_speckle(noiseless_stack, MsneConfig(step_rule="raw", max_iters=50))

    assert np.all(np.diff(estimate.cost_trace) <= 1e-12)


def test_sign_flips_counted_with_coupling(rng, caplog):
    """Test a negative VSS step under beta1 > 0 is counted and logged."""
    stack = FrameStack.from_array(rng.uniform(0.5, 1.5, size=(3, 4, 4)))

    with caplog.at_level("INFO", logger="bmode"):
        coupled = estimate_speckle(stack, MsneConfig(beta1=10.0, max_iters=5))
    plain = estimate_speckle(stack, MsneConfig(max_iters=5))

    assert coupled.sign_flips >= 1
    assert plain.sign_flips == 0
    assert any('"msne_finished"' in r.getMessage() and '"sign_flips"' in r.getMessage() for r in caplog.records)


def test_unit_norm_every_iteration(noiseless_stack):
    """Test the stacked estimate keeps unit Frobenius norm."""
    estimate = estimate_speckle(noiseless_stack, MsneConfig(max_iters=300))

    assert np.allclose(estimate.norm_trace, 1.0, atol=1e-10)
    assert np.linalg.norm(estimate.fields.as_array()) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("cost_form", ["quadratic", "quartic"])
def test_cost_trace_non_increasing(small_phantom, cost_form):
    """Test accepted steps never raise the cost beyond the slack."""
    stack = synthesize_frames(small_phantom, SpeckleParams(sigma=0.4, p=4, seed=2))
    estimate = estimate_speckle(stack, MsneConfig(max_iters=200, cost_form=cost_form))

    diffs = np.diff(estimate.cost_trace)
    assert np.all(diffs <= 1e-12)
    assert len(estimate.mu_trace) == len(estimate.cost_trace) - 1


def test_estimate_requires_two_frames():
    """Test a single-frame stack is rejected."""
    stack = FrameStack.from_array(np.ones((1, 4, 4)))

    with pytest.raises(ValueError, match="p >= 2 required"):
        estimate_speckle(stack)


def test_estimate_fields_shape(noiseless_stack):
    """Test the estimate has one field per frame with matching size."""
    estimate = estimate_speckle(noiseless_stack, MsneConfig(max_iters=10))

    assert estimate.p == 3
    assert estimate.fields.shape == (8, 8)
    assert estimate.fields.domain is Domain.ESTIMATE


def test_npm_scale_invariance_of_estimate(noiseless_stack, true_fields):
    """Test NPM ignores a positive rescaling of the estimate."""
    estimate = estimate_speckle(noiseless_stack, MsneConfig(max_iters=50))

    a = npm(true_fields, estimate.fields)
    b = npm(true_fields, 7.5 * estimate.fields.as_array())

    assert a == pytest.approx(b, abs=1e-9)


@pytest.mark.parametrize("kwargs", [{"beta1": -1.0}, {"max_iters": 0}, {"cost_form": "cubic"}, {"step_rule": "newton"}])
def test_config_validation(kwargs):
    """Test invalid estimator settings are rejected."""
    with pytest.raises(ValueError):
        MsneConfig(**kwargs)


def test_write_trace_csv(noiseless_stack, true_fields, tmp_path):
    """Test the trace CSV has one row per recorded cost."""
    estimate = estimate_speckle(noiseless_stack, MsneConfig(max_iters=20), truth=true_fields)
    path = tmp_path / "trace.csv"

    write_trace_csv(estimate, path)

    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iteration,cost,mu,npm_db"
    assert len(lines) == len(estimate.cost_trace) + 1
