import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))  # make `oracles` importable

from anomseg import phantom
from anomseg.segnet import network, training


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


@pytest.fixture(scope="session")
def tiny_phantom_config():
    """Small, fast geometry that the depth-3 micro network accepts."""
    return phantom.PhantomConfig(
        height=24,
        width=32,
        bscans_per_volume=2,
        num_layer_classes=4,
        boundary_smoothness=2.0,
        layer_intensity_palette=(0.03, 0.55, 0.3, 0.75),
        speckle_strength=0.05,
        anomaly_spec=(phantom.AnomalySpec("fluid_blob", (3.0, 5.0), (1, 1)),),
        seed=11,
    )


@pytest.fixture(scope="session")
def micro_net_config():
    return network.NetworkConfig(
        depth=2, channels=(2, 2), num_classes=3, dropout_rate=0.3, input_shape=(8, 8)
    )


@pytest.fixture(scope="session")
def healthy_pair(tiny_phantom_config):
    v = phantom.generate_volume(tiny_phantom_config, "h0", "healthy", 5)
    return v.bscans[0], v.labels[0]
