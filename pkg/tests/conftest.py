import numpy as np
import pytest

from engagekit.synthetic import generate_synthetic_dataset


@pytest.fixture(scope="session")
def small_synthetic():
    """4 students x 40 seconds, well separated; shared across tests."""
    return generate_synthetic_dataset(
        students=4, seconds_per_student=40, separation=3.0, seed=11
    )


@pytest.fixture(scope="session")
def shifted_synthetic():
    """3 students x 30 seconds with a per-student offset."""
    return generate_synthetic_dataset(
        students=3,
        seconds_per_student=30,
        separation=3.0,
        subject_shift=2.0,
        seed=7,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
