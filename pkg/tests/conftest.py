"""Pytest configuration and fixtures."""
import numpy as np
import pytest

from src.config.settings import PipelineConfig
from src.imagecore.image import Domain, FrameStack, Image
from src.imagecore.phantom import PhantomSpec, generate_phantom
from src.specklesim.synth import SpeckleParams, synthesize_frames


SPECKLE_LEVELS = np.array([0.8, 1.0, 1.3])


@pytest.fixture
def rng():
    """Provide a seeded generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def clean_image(rng):
    """Provide a small strictly positive clean image."""
    return Image(rng.uniform(0.8, 1.2, size=(8, 8)), Domain.ENVELOPE)


@pytest.fixture
def true_fields(rng):
    """
    Provide p=3 speckle fields whose values at every pixel are a permutation
    of the same three levels, so the per-pixel sums match everywhere.
    """
    order = np.argsort(rng.random((3, 8, 8)), axis=0)
    return FrameStack.from_array(SPECKLE_LEVELS[order], Domain.ESTIMATE)


@pytest.fixture
def noiseless_stack(clean_image, true_fields):
    """Provide frames r .* u_k with no additive noise."""
    return FrameStack.from_array(clean_image.data[None] * true_fields.as_array(), Domain.ENVELOPE)


@pytest.fixture
def bright_clean(rng):
    """Provide an 8x8 clean image at a realistic envelope scale."""
    return Image(rng.uniform(500.0, 1000.0, size=(8, 8)), Domain.ENVELOPE)


@pytest.fixture
def speckled_stack(bright_clean):
    """Provide p=3 synthesized frames of bright_clean with sigma=0.2 and no additive noise."""
    return synthesize_frames(bright_clean, SpeckleParams(sigma=0.2, p=3, seed=5))


@pytest.fixture
def small_phantom():
    """Provide a 32x32 phantom at unit peak."""
    return generate_phantom(PhantomSpec(size=32, peak=1.0))


@pytest.fixture
def bright_phantom():
    """Provide a 32x32 phantom at the default peak."""
    return generate_phantom(PhantomSpec(size=32))


@pytest.fixture
def small_config():
    """Provide a pipeline config small enough for unit tests."""
    return PipelineConfig(
        size=16,
        frames=3,
        msne_max_iters=200,
        mads_max_iters=200,
        deconv_max_iters=20,
        rois="0,0,16,16",
    )


@pytest.fixture
def out_dir(tmp_path):
    """Provide a temporary output directory."""
    path = tmp_path / "out"
    path.mkdir()
    return path
