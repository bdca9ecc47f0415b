import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

# torch determinism contract: single-threaded CPU
torch.set_num_threads(1)

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


from helpers import random_image  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def small_image(rng):
    return random_image(rng, (8, 8))
