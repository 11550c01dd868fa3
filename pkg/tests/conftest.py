import numpy as np
import pytest

from photoent import TwoModeState


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_state(rng, d_a: int, d_b: int) -> TwoModeState:
    """Haar-ish random pure state on the truncated grid."""
    coeffs = rng.normal(size=(d_a, d_b)) + 1j * rng.normal(size=(d_a, d_b))
    return TwoModeState(coeffs / np.linalg.norm(coeffs))
