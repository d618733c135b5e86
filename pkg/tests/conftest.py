import numpy as np
import pytest

from modules.nets import generator_spec, init_net, network_from_weights
from rng import Xoshiro256pp


@pytest.fixture
def rng():
    return Xoshiro256pp(1234)


@pytest.fixture
def tanh_net():
    """Seeded 8 -> 16 -> 32 tanh generator with weights large enough to bend."""
    spec = generator_spec([8, 16, 32], hidden_activation="tanh", output_activation="tanh")
    return init_net(spec, Xoshiro256pp(1), weight_std=0.3)


@pytest.fixture
def tiny_generator():
    """4 -> 8 -> 9 generator with a tanh output, small enough for CLI runs."""
    spec = generator_spec([4, 8, 9], hidden_activation="tanh", output_activation="tanh")
    return init_net(spec, Xoshiro256pp(5), weight_std=0.5)


@pytest.fixture
def identity_generator():
    def build(d=8):
        return network_from_weights(generator_spec([d, d], output_activation="identity"), [np.eye(d)])
    return build
