import numpy as np
import pytest

from utilities.algebra import lindblad_q
from utilities.cavity import JcParams, jaynes_cummings
from utilities.cmps import CmpsRep, FreeParams, from_cavity, from_free


def random_hermitian(rng, dim):
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (A + A.conj().T)


def random_family(rng, dim, n_channels=1):
    """Random trace-preserving (Q, [R, ...]) family."""
    channels = [rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)) for _ in range(n_channels)]
    return lindblad_q(random_hermitian(rng, dim), channels), channels


def random_density(rng, dim):
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = A @ A.conj().T
    return rho / np.trace(rho)


def coherent_rep(alpha: complex, s: float = 1.0) -> CmpsRep:
    return from_free(FreeParams(np.zeros((1, 1)), np.array([[alpha]]), s))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def jc_params():
    return JcParams(g=1.0, omega=0.5, kappa=1.0, gamma=0.25, n_max=6)


@pytest.fixture
def jc_rep(jc_params):
    return from_cavity(jaynes_cummings(jc_params), s=2.0)


@pytest.fixture
def small_jc_rep():
    """Dimension-8 cavity state for brute-force oracles."""
    return from_cavity(jaynes_cummings(JcParams(g=1.0, omega=0.5, kappa=1.0, gamma=0.25, n_max=3)), s=1.5)


@pytest.fixture
def vacuum_rep():
    return coherent_rep(0.0)


@pytest.fixture
def free_rep(rng):
    K = random_hermitian(rng, 3)
    R = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    return from_free(FreeParams(K, R, 1.3))
