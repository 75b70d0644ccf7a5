"""Shared fixtures: the model families every test module exercises."""
import numpy as np
import pytest

from ahx import disc_family, halfplane_family, perturbed_family


@pytest.fixture(scope="session")
def halfplane():
    """Flat boundary metric; every geodesic is an exact half-circle."""
    return halfplane_family()


@pytest.fixture(scope="session")
def disc():
    """Global normal form of the hyperbolic disc (periodic boundary)."""
    return disc_family()


@pytest.fixture(scope="session")
def perturbed():
    """Generic smooth perturbation used for invariance/regression tests."""
    return perturbed_family(a_cos=[0.0, 0.1], b_cos=[0.02],
                            b_sin=[0.0, 0.03])


@pytest.fixture(scope="session")
def jet_family():
    """Collar metric h = exp(2 rho (0.1 cos y + 0.05 rho)).

    Boundary jet in closed form: h(0) = 1, h'(0) = 0.2 cos y,
    h''(0) = 0.04 cos^2 y + 0.2.
    """
    return perturbed_family(a_cos=[0.0, 0.1], b_cos=[0.05])


def jet_truth(y0: float):
    a = 0.1 * np.cos(y0)
    return 1.0, 2.0 * a, 4.0 * a * a + 0.2


@pytest.fixture(scope="session")
def bump_family():
    """Localized curvature bump strong enough to create conjugate points.

    The bump puts a band of positive curvature around rho ~ 0.37; covectors
    whose turning point lands inside the band (eta near 3.2) pick up a
    conjugate point, while the family stays well-defined on rho < 0.7.
    """
    return perturbed_family(bump={"amplitude": 1.0, "rho_lo": 0.3,
                                  "rho_hi": 0.45}, rho_max=0.7)
