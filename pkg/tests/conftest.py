import numpy as np
import pytest

from sarwind.scene import Grid2D
from sarwind.synth import SynthParams, gen_scene


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_scene():
    """One deterministic 256x256 scene with the full channel set (GMF wind
    included), shared read-only across tests."""
    p = SynthParams(seed=99, rows=256, cols=256, n_scenes=1)
    return gen_scene(p, 0, compute_gmf=True)


@pytest.fixture
def flat_grid():
    return Grid2D(np.full((20, 20), 3.5))
