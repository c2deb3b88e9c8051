import numpy as np
import pytest

from qmaflow import ScalarField, build_flat_torus


@pytest.fixture(scope="session")
def g1():
    """n=1 torus with z^1 active at 16 samples."""
    return build_flat_torus(1, [16, 1, 16, 1])


@pytest.fixture(scope="session")
def g1_full():
    """n=1 torus with all four axes active."""
    return build_flat_torus(1, [8, 8, 8, 8])


@pytest.fixture(scope="session")
def g2():
    """n=2 torus reduced to the real axes of z^1, z^3."""
    return build_flat_torus(2, [16, 1, 16, 1, 1, 1, 1, 1])


def cos_field(geom, axis=0, amp=1.0):
    return ScalarField(geom, amp * np.cos(geom.coordinate(axis)) + np.zeros(geom.grid_shape))
