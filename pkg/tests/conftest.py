import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from glsim.config import ArchConfig
from glsim.encoder import expected_shapes, from_named_arrays


def random_weights(config, rng, scale=0.5):
    """WeightSet with every array (LN params included) drawn at ``scale``."""
    arrays = {}
    for name, shape in expected_shapes(config).items():
        a = rng.normal(0.0, scale, size=shape)
        if name.endswith(("_g", ".g")):
            a = 1.0 + a
        arrays[name] = a.astype(np.float32)
    return from_named_arrays(arrays, config)


def random_stack(rng, depth, heads, n):
    """Row-stochastic attention stack of shape (L, H, n, n)."""
    a = rng.random((depth, heads, n, n)) + 1e-3
    return a / a.sum(axis=-1, keepdims=True)


def named_lists(weights):
    return {k: v.astype(np.float64).tolist() for k, v in weights.named_arrays()}


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def toy_config():
    return ArchConfig(patch_size=4, depth=2, heads=2, width=16, image_w=32, image_h=32, num_classes=5, top_o=4)
