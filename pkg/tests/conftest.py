import numpy as np
import pytest

from conslaw.models import ModelSpec, build_phi


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def spec(kind, *widths):
    return ModelSpec(kind, tuple(widths))


def phi_of(kind, *widths):
    return build_phi(spec(kind, *widths))
