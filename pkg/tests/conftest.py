import numpy as np
import pytest

from quasilocal.mesh_core import build_icosphere
from quasilocal.reference_geometries import ellipsoid_metric, round_sphere, schwarzschild_sphere


@pytest.fixture(scope="session")
def unit_sphere():
    """(mesh, sigma) of the unit icosphere at subdivision 3."""
    return build_icosphere(3)


@pytest.fixture(scope="session")
def ellipsoid():
    """Seeded metric and sampling embedding of the (1, 1, 1.2) ellipsoid."""
    return ellipsoid_metric(1.0, 1.0, 1.2, subdivisions=3, seeded=True)


@pytest.fixture(scope="module")
def schwarzschild():
    return schwarzschild_sphere(1.0, 10.0, subdivisions=3)


@pytest.fixture(scope="module")
def flat_sphere():
    return round_sphere(1.0, 2.0, subdivisions=3)


@pytest.fixture
def rng():
    return np.random.default_rng(20241018)


@pytest.fixture
def smooth_field(rng):
    """Factory for random mean-free quadratic polynomials in the vertex positions, scaled to max |value| = 1."""

    def make(positions: np.ndarray, mass: np.ndarray) -> np.ndarray:
        p = positions / np.abs(positions).max()
        monomials = np.column_stack([p, p[:, [0]] * p[:, [1]], p[:, [1]] * p[:, [2]], p[:, [0]] * p[:, [2]],
                                     p ** 2])
        values = monomials @ rng.normal(size=monomials.shape[1])
        values -= mass @ values / mass.sum()
        return values / np.abs(values).max()

    return make
