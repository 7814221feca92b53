import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def cn(rng: np.random.Generator, *shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@st.composite
def channels(draw, min_rows=1, max_rows=4, min_cols=1, max_cols=4, scale=(0.1, 10.0)):
    """Random complex channel from a drawn seed and power."""
    m = draw(st.integers(min_rows, max_rows))
    M = draw(st.integers(min_cols, max_cols))
    seed = draw(st.integers(0, 2**32 - 1))
    gain = draw(st.floats(*scale))
    return np.sqrt(gain) * cn(np.random.default_rng(seed), m, M)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
