import numpy as np
import pytest
import scipy.linalg as la

from tests.conftest import coherent_rep, random_hermitian
from tools.optimizer import OptimizerConfig, VariationalSpace, minimize
from utilities.cmps import CmpsRep, g1, g2, kinetic_fd, observables, stationary
from utilities.errors import QuadratureError
from utilities.model import (
    Kernel,
    LiebLinigerParams,
    energy_density,
    from_unit_solution,
    interaction_general,
    lieb_liniger_gamma,
    rescale,
    unit_problem,
)


def test_vacuum_energy_is_zero(vacuum_rep):
    breakdown = energy_density(vacuum_rep, LiebLinigerParams(v=2.0, mu=1.0))
    assert breakdown.f == 0.0
    assert breakdown.T == breakdown.W == breakdown.N == 0.0


@pytest.mark.parametrize("alpha,v,mu", [(0.5**0.5, 1.0, 1.0), (0.3, 2.5, 1.0), (1.2, 0.4, 2.0)])
def test_coherent_state_energy(alpha, v, mu):
    n = alpha**2
    breakdown = energy_density(coherent_rep(alpha), LiebLinigerParams(v=v, mu=mu))
    assert breakdown.T == pytest.approx(0.0, abs=1e-14)
    assert breakdown.f == pytest.approx(v * n**2 - mu * n, rel=1e-12)


def test_half_filled_coherent_minimum():
    assert energy_density(coherent_rep(0.5**0.5), LiebLinigerParams(v=1.0)).f == pytest.approx(-0.25, rel=1e-12)


def test_breakdown_adds_up(jc_rep):
    breakdown = energy_density(jc_rep, LiebLinigerParams(v=3.0, mu=0.7))
    assert breakdown.f == breakdown.T + breakdown.W + breakdown.N
    assert set(breakdown.to_dict()) == {"T", "W", "N", "f"}


def test_energy_from_measured_correlators(jc_rep):
    """Energy assembled from photodetection data matches the exact functional."""
    p = LiebLinigerParams(v=2.0, mu=1.0)
    exact = energy_density(jc_rep, p)
    s = jc_rep.s
    lab_g1 = g1(jc_rep, [0.0]).to_lab(s).values[0].real
    lab_g2 = g2(jc_rep, [0.0]).to_lab(s).values[0].real
    measured = -p.mu * lab_g1 / s + p.v * lab_g2 / s**2 + kinetic_fd(jc_rep, 1e-3)
    assert measured == pytest.approx(exact.f, abs=0.1 * exact.T + 1e-12)


def test_interaction_general_delta_only_is_bit_identical(jc_rep):
    v = 1.7
    W = interaction_general(jc_rep, Kernel(delta_weight=v))
    assert W == energy_density(jc_rep, LiebLinigerParams(v=v)).W


def test_interaction_general_vacuum(vacuum_rep):
    assert interaction_general(vacuum_rep, Kernel(delta_weight=1.0, smooth=lambda x: np.exp(-x))) == 0.0


def test_interaction_general_coherent_closed_form():
    rep = coherent_rep(0.9)
    n = observables(rep).n
    W = interaction_general(rep, Kernel(smooth=lambda x: np.exp(-x), cutoff=3.0))
    assert W == pytest.approx(2 * n**2 * (1 - np.exp(-3.0)), rel=1e-6)


def test_interaction_general_reports_unconverged_quadrature():
    rep = coherent_rep(0.9)
    with pytest.raises(QuadratureError):
        interaction_general(rep, Kernel(smooth=lambda x: np.sin(200.0 * x), cutoff=10.0), max_intervals=64)


def test_kernel_validation():
    with pytest.raises(ValueError):
        Kernel(delta_weight=-1.0)
    with pytest.raises(ValueError):
        Kernel(cutoff=0.0)


@pytest.mark.parametrize("v", [0.0, -1.0, float("inf")])
def test_interaction_strength_must_be_positive(v):
    with pytest.raises(ValueError):
        LiebLinigerParams(v=v)


def test_lieb_liniger_gamma():
    obs = observables(coherent_rep(0.5))
    assert lieb_liniger_gamma(obs, LiebLinigerParams(v=2.0)) == pytest.approx(8.0)
    assert lieb_liniger_gamma(observables(coherent_rep(0.0)), LiebLinigerParams(v=2.0)) == float("inf")


def test_rescale_identity(free_rep):
    same = rescale(free_rep, 1.0)
    assert np.array_equal(same.Q, free_rep.Q)
    assert np.array_equal(same.R_obs, free_rep.R_obs)


@pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
def test_rescale_exponents(free_rep, c):
    before, after = observables(free_rep), observables(rescale(free_rep, c))
    assert after.n == pytest.approx(c * before.n, rel=1e-9)
    assert after.G2_0 == pytest.approx(c**2 * before.G2_0, rel=1e-9)
    assert after.T == pytest.approx(c**3 * before.T, rel=1e-9)
    assert np.abs(stationary(rescale(free_rep, c)).matrix - stationary(free_rep).matrix).max() <= 1e-10


def test_rescale_cavity_state_keeps_unobserved_channels(jc_rep):
    scaled = rescale(jc_rep, 3.0)
    assert len(scaled.R_unobs) == len(jc_rep.R_unobs)
    assert observables(scaled).n == pytest.approx(3.0 * observables(jc_rep).n, rel=1e-9)


def test_energy_is_gauge_invariant(free_rep):
    rng = np.random.default_rng(31)
    U = la.expm(1j * random_hermitian(rng, free_rep.D))
    Ud = U.conj().T
    moved = CmpsRep(U @ free_rep.Q @ Ud, U @ free_rep.R_obs @ Ud, (), free_rep.s)
    p = LiebLinigerParams(v=1.3)
    assert energy_density(moved, p).f == pytest.approx(energy_density(free_rep, p).f, rel=1e-9)


def test_unit_problem():
    unit, c = unit_problem(LiebLinigerParams(v=3.0, mu=4.0))
    assert c == 2.0
    assert unit == LiebLinigerParams(v=1.5, mu=1.0)
    with pytest.raises(ValueError):
        unit_problem(LiebLinigerParams(v=1.0, mu=0.0))


def test_scaling_recipe_matches_direct_optimisation():
    space = VariationalSpace.free_cmps(D=1)
    lam0 = space.encode_free(np.zeros((1, 1)), np.array([[0.5]]), 1.0)
    cfg = OptimizerConfig(tol=1e-13)
    p = LiebLinigerParams(v=1.0, mu=4.0)
    unit, c = unit_problem(p)

    direct = minimize(space, lam0, p, cfg)
    via_unit = minimize(space, lam0, unit, cfg)
    rep, breakdown = from_unit_solution(space.build(via_unit.lambda_star), via_unit.breakdown, c)

    assert direct.f_star == pytest.approx(-p.mu**2 / (4 * p.v), rel=1e-5)
    assert breakdown.f == pytest.approx(direct.f_star, rel=1e-5)
    assert energy_density(rep, p).f == pytest.approx(breakdown.f, rel=1e-9)
