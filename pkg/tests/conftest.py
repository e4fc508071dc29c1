import numpy as np
import pytest

from arcbandit.glm import ArmSet, logistic_spec


@pytest.fixture(scope="session")
def spec():
    return logistic_spec()


@pytest.fixture
def pricing_arms():
    return ArmSet.for_pricing([40, 80, 120, 160, 200, 240, 280, 320, 360, 400], 270.0)


@pytest.fixture
def small_arms():
    """Moderate-scale instance: keeps fixed-point magnitudes far from overflow."""
    return ArmSet.for_pricing([0.5, 1.0, 1.5, 2.0, 3.0], 20.0)


def random_spd(rng, dim, eig_low=0.1, eig_high=2.0):
    """Random SPD matrix with eigenvalues in [eig_low, eig_high]."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eig = rng.uniform(eig_low, eig_high, size=dim)
    return (q * eig) @ q.T
