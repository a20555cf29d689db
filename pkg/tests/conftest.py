import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # makes `oracles` importable

from tabe.synth import SynthConfig, generate_scene


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(scope="session")
def session_scene(tmp_path_factory):
    """One synthetic scene shared by read-only tests."""
    root = tmp_path_factory.mktemp("scene")
    return generate_scene(root, SynthConfig(frame_count=24, seed=3))


def square_mask(shape, u0, v0, size):
    mask = np.zeros(shape, dtype=bool)
    mask[v0 : v0 + size, u0 : u0 + size] = True
    return mask
