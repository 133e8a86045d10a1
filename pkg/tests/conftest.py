import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lecf.manifold import project_to_hyperboloid

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

finite = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)


@st.composite
def spatial(draw, n=None, lo=2, hi=8):
    n = n if n is not None else draw(st.integers(lo, hi))
    return draw(arrays(np.float64, n, elements=finite))


@st.composite
def point_pair(draw, lo=2, hi=8):
    n = draw(st.integers(lo, hi))
    a, b = draw(spatial(n)), draw(spatial(n))
    return project_to_hyperboloid(a), project_to_hyperboloid(b)


def random_points(rng: np.random.Generator, k: int, n: int, scale: float = 1.0, C: float = 1.0) -> torch.Tensor:
    return project_to_hyperboloid(rng.normal(scale=scale, size=(k, n)), C)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
