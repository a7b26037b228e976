"""Tests for blind deconvolution (bMCFLMS and cepstrum)."""
import time

import numpy as np
import pytest
from scipy import fft as spfft

from src.deconv.bmcflms import bmcflms_pass, cross_relation_cost, deconvolve_1d, deconvolve_2d, deconvolve_2d_passes
from src.deconv.cepstrum import cepstrum_deconvolve, cepstrum_deconvolve_2d, estimate_psf
from src.deconv.models import BlockPlan, DeconvConfig, Psf1D, plan_blocks
from src.deconv.synthetic import (
    autocorrelation_width,
    default_axial_psf,
    default_lateral_psf,
    separable_blur_pair,
)
from src.imagecore.image import Domain, Image
from src.metrics.misalignment import npm


PULSE = np.array([1.0, 0.6, -0.3, 0.2, -0.1, 0.05, 0.03, 0.01])


def _blurred_channels(rng, trf_length, channels, psf):
    """Channels x_i = s * h_i with full linear convolution."""
    trf = rng.standard_normal((trf_length, channels))
    lines = np.stack([np.convolve(trf[:, c], psf) for c in range(channels)], axis=1)
    return trf, lines


def _log_magnitude_spread(data: np.ndarray) -> float:
    return float(np.std(np.mean(np.log(np.abs(spfft.fft(data, axis=0))), axis=1)))


def test_plan_blocks_covers_trf():
    """Test the block split covers every TRF sample."""
    plan = plan_blocks(256, 2, 8)

    assert plan.trf_length == 249
    assert plan.block_length == 125
    assert plan.window_length == 132
    assert plan.blocks * plan.block_length >= plan.trf_length


def test_plan_window_zero_pads_last_block():
    """Test the last observation window is padded to full length."""
    plan = plan_blocks(20, 3, 4)
    signal = np.ones((20, 2))

    window = plan.window(signal, 2)

    assert window.shape == (plan.window_length, 2)
    assert np.all(window[20 - 2 * plan.block_length:] == 0)


@pytest.mark.parametrize("args", [(10, 20, 1), (4, 1, 8)])
def test_plan_blocks_rejects_impossible_splits(args):
    """Test splits with too few TRF samples raise."""
    with pytest.raises(ValueError):
        plan_blocks(*args)


def test_block_plan_must_cover():
    """Test a plan whose blocks are too short is rejected."""
    with pytest.raises(ValueError, match="do not cover"):
        BlockPlan(blocks=2, block_length=10, psf_length=8, signal_length=64)


def test_cross_relation_zero_at_truth(rng):
    """Test the pairwise cost vanishes for the true TRFs."""
    trf, lines = _blurred_channels(rng, 40, 4, PULSE)

    assert cross_relation_cost(lines, trf) <= 1e-20


def test_cross_relation_rejects_channel_mismatch(rng):
    """Test a TRF with the wrong channel count raises."""
    _, lines = _blurred_channels(rng, 20, 3, PULSE)

    with pytest.raises(ValueError, match="channels"):
        cross_relation_cost(lines, np.ones((20, 2)))


def test_single_block_recovers_trf(rng):
    """Test one block over four channels reaches -20 dB NPM."""
    trf, lines = _blurred_channels(rng, 249, 4, PULSE)
    plan = plan_blocks(256, 1, 8)

    est = bmcflms_pass(lines, plan, DeconvConfig(max_iters=10000, tol=1e-12, search="locally_optimal"), truth=trf)

    assert npm(trf, est.trf) <= -20.0
    assert est.npm_trace[-1] == pytest.approx(npm(trf, est.unit_trf[:249]))
    assert est.image.shape == (256, 4)
    assert est.image.domain is Domain.RF


def test_impulse_psf_returns_input(rng):
    """Test an identity PSF gives a TRF proportional to the input."""
    lines = rng.standard_normal((64, 3))
    plan = plan_blocks(64, 1, 1)

    est = bmcflms_pass(lines, plan, DeconvConfig(max_iters=2000, tol=0.0, search="locally_optimal"))

    cosine = abs(np.sum(est.trf * lines)) / (np.linalg.norm(est.trf) * np.linalg.norm(lines))
    assert cosine >= 0.999


def test_unit_norm_and_monotone_cost(rng):
    """Test the stacked estimate stays unit norm and the cost never rises."""
    _, lines = _blurred_channels(rng, 57, 4, PULSE)
    plan = plan_blocks(64, 2, 8)

    est = bmcflms_pass(lines, plan, DeconvConfig(max_iters=200))

    assert np.allclose(est.norm_trace, 1.0, atol=1e-10)
    assert np.all(np.diff(est.cost_trace) <= 1e-11)
    assert len(est.mu_trace) == len(est.cost_trace) - 1
    assert len(est.psfs) == 2


@pytest.mark.parametrize("search", ["locally_optimal", "gradient"])
def test_both_searches_descend(rng, search):
    """Test the plain gradient search is also monotone."""
    _, lines = _blurred_channels(rng, 30, 3, PULSE[:3])
    plan = plan_blocks(32, 1, 3)

    est = bmcflms_pass(lines, plan, DeconvConfig(max_iters=100, search=search))

    assert est.cost_trace[-1] < est.cost_trace[0]
    assert np.all(np.diff(est.cost_trace) <= 1e-11)


def test_default_search_is_plain_gradient():
    """Test the default update is the normalized gradient with exact line search."""
    assert DeconvConfig().search == "gradient"


def test_default_axial_pulse_is_wider_than_two_samples():
    """Test the default pulse blurs a white TRF to more than two samples axially."""
    trf, rf = separable_blur_pair((256, 32), seed=4)

    assert autocorrelation_width(rf, axis=0) > 2.0
    assert autocorrelation_width(trf, axis=0) < 1.5


def test_scale_invariance(rng):
    """Test scaling the input scales the TRF and keeps its direction."""
    trf, lines = _blurred_channels(rng, 30, 3, PULSE[:3])
    plan = plan_blocks(32, 1, 3)
    cfg = DeconvConfig(max_iters=3000, tol=0.0)

    base = bmcflms_pass(lines, plan, cfg)
    scaled = bmcflms_pass(3.7 * lines, plan, cfg)

    assert npm(base.unit_trf, scaled.unit_trf) <= -60.0
    assert np.linalg.norm(scaled.trf) / np.linalg.norm(base.trf) == pytest.approx(3.7, rel=1e-4)


def test_rejects_single_channel():
    """Test one channel is not enough."""
    with pytest.raises(ValueError, match="At least 2 channels"):
        bmcflms_pass(np.ones((16, 1)), plan_blocks(16, 1, 1))


def test_rejects_all_zero_input():
    """Test all-zero channels are degenerate."""
    with pytest.raises(ValueError, match="Degenerate"):
        bmcflms_pass(np.zeros((16, 3)), plan_blocks(16, 1, 1))


def test_rejects_plan_length_mismatch(rng):
    """Test a plan built for another length raises."""
    with pytest.raises(ValueError, match="Block plan"):
        bmcflms_pass(rng.standard_normal((16, 3)), plan_blocks(32, 1, 1))


def test_two_dimensional_deconvolution_narrows_speckle():
    """Test both autocorrelation widths shrink after the two passes."""
    _, rf = separable_blur_pair((64, 16), seed=3)

    out = deconvolve_2d(rf, DeconvConfig(max_iters=500))

    assert out.shape == rf.shape
    assert autocorrelation_width(out, axis=0) < autocorrelation_width(rf, axis=0)
    assert autocorrelation_width(out, axis=1) < autocorrelation_width(rf, axis=1)


def test_two_pass_estimates_have_their_directions():
    """Test the axial and lateral passes report their PSF directions."""
    _, rf = separable_blur_pair((48, 12), seed=1)

    axial, lateral = deconvolve_2d_passes(rf, DeconvConfig(max_iters=50))

    assert all(psf.direction == "axial" for psf in axial.psfs)
    assert all(psf.direction == "lateral" for psf in lateral.psfs)
    assert deconvolve_1d(rf, DeconvConfig(max_iters=50)).shape == rf.shape


def test_cepstrum_on_impulses(rng):
    """Test one spike per column passes through the Wiener inverse unchanged."""
    data = np.zeros((64, 8))
    data[rng.integers(0, 64, size=8), np.arange(8)] = 1.0

    out = cepstrum_deconvolve(Image(data, Domain.RF))

    assert np.allclose(out.data, data / 1.001, atol=1e-9)


def test_cepstrum_flattens_spectrum(rng):
    """Test the column-averaged log spectrum is at least twice as flat afterwards."""
    t = np.arange(16)
    psf = 0.7 ** t * np.cos(1.2 * t)
    trf = rng.standard_normal((256, 64))
    rf = spfft.ifft(spfft.fft(trf, axis=0) * spfft.fft(psf, 256)[:, None], axis=0).real

    out = cepstrum_deconvolve(Image(rf, Domain.RF), lifter_cutoff=16)

    assert _log_magnitude_spread(out.data) * 2 <= _log_magnitude_spread(rf)


def test_cepstrum_rejects_long_lifter(rng):
    """Test a lifter at least as long as the line raises."""
    rf = Image(rng.standard_normal((16, 4)), Domain.RF)

    with pytest.raises(ValueError, match="lifter_cutoff"):
        cepstrum_deconvolve(rf, lifter_cutoff=16)
    with pytest.raises(ValueError):
        cepstrum_deconvolve(rf, noise_floor=0.0)


def test_estimate_psf_is_unit_energy(rng):
    """Test the cepstral PSF has one tap per sample and unit RMS spectrum."""
    rf = Image(rng.standard_normal((32, 6)), Domain.RF)

    psf = estimate_psf(rf, lifter_cutoff=8)

    assert isinstance(psf, Psf1D)
    assert psf.length == 32
    assert np.sum(psf.taps ** 2) == pytest.approx(1.0, rel=1e-9)


def test_cepstrum_2d_keeps_shape(rng):
    """Test the two cepstral passes keep the image size."""
    rf = Image(rng.standard_normal((32, 8)), Domain.RF)

    assert cepstrum_deconvolve_2d(rf, lifter_cutoff=8).shape == (32, 8)


def test_cepstrum_is_much_faster():
    """Test the cepstral method runs at least fifty times faster than bMCFLMS."""
    _, rf = separable_blur_pair((256, 64), seed=0)
    cfg = DeconvConfig(max_iters=200, tol=0.0)

    start = time.perf_counter()
    deconvolve_2d(rf, cfg)
    iterative = time.perf_counter() - start

    cepstral = []
    for _ in range(3):
        start = time.perf_counter()
        cepstrum_deconvolve_2d(rf)
        cepstral.append(time.perf_counter() - start)

    assert iterative >= 50 * min(cepstral)


def test_synthetic_pair_shapes():
    """Test the blurred image has the requested size and unit-norm PSFs."""
    trf, rf = separable_blur_pair((40, 12))

    assert rf.shape == (40, 12)
    assert trf.shape == (40 - 8 + 1, 12 - 4 + 1)
    assert np.linalg.norm(default_axial_psf()) == pytest.approx(1.0)
    assert np.linalg.norm(default_lateral_psf()) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        separable_blur_pair((6, 12))


def test_autocorrelation_width_of_white_noise(rng):
    """Test white noise is about two samples wide and blur widens it."""
    noise = Image(rng.standard_normal((512, 32)), Domain.RF)
    blurred = Image(np.apply_along_axis(lambda c: np.convolve(c, np.ones(6), mode="same"), 0, noise.data), Domain.RF)

    assert autocorrelation_width(noise, axis=0) < 2.0
    assert autocorrelation_width(blurred, axis=0) > autocorrelation_width(noise, axis=0)
    with pytest.raises(ValueError):
        autocorrelation_width(noise, axis=2)
