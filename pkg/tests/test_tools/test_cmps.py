import numpy as np
import pytest
import scipy.linalg as la

from tests.conftest import coherent_rep, random_density, random_hermitian
from utilities.algebra import spectral_gap
from utilities.cavity import CavitySystem, Channel, JcParams, jaynes_cummings, jc_operators
from utilities.cmps import (
    CmpsRep,
    CorrelationSeries,
    FreeParams,
    from_cavity,
    from_free,
    g1,
    g2,
    kinetic_fd,
    observables,
    relax_boundary,
    stationary,
)
from utilities.errors import StructureError


def _fock_cavity(n_max: int, kappa: float) -> CavitySystem:
    a = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1)
    return CavitySystem(np.zeros((n_max + 1, n_max + 1)), (Channel(kappa, a, observed=True),))


def _stationarity_defect(rep: CmpsRep) -> float:
    Q = rep.Q
    return float(np.abs(Q + Q.conj().T + sum(R.conj().T @ R for R in rep.channels)).max())


def _row_stacked_generator(rep: CmpsRep) -> np.ndarray:
    """Lab-time generator in row-major vectorisation, vec_r(A X B) = kron(A, B.T) vec_r(X)."""
    d = rep.D
    eye = np.eye(d)
    M = np.kron(rep.Q, eye) + np.kron(eye, rep.Q.conj())
    for R in rep.channels:
        M = M + np.kron(R, R.conj())
    return rep.s * M


def _oracle_correlators(rep: CmpsRep, taus):
    M = _row_stacked_generator(rep)
    d = rep.D
    kernel = la.null_space(M / rep.s)
    rho = kernel[:, 0].reshape(d, d)
    rho = rho / np.trace(rho)
    R = rep.R_obs
    N = R.conj().T @ R
    first, second = [], []
    for tau in taus:
        prop = la.expm(M * tau)
        X1 = (prop @ (rho @ R.conj().T).ravel()).reshape(d, d)
        X2 = (prop @ (R @ rho @ R.conj().T).ravel()).reshape(d, d)
        first.append(np.trace(R @ X1))
        second.append(np.trace(N @ X2))
    return np.array(first), np.array(second).real


def test_from_cavity_scales_with_s():
    sys = _fock_cavity(2, kappa=1.0)
    a = np.asarray(sys.channels[0].op)
    rep = from_cavity(sys, s=4.0)
    assert np.allclose(rep.R_obs, 0.5 * a, atol=1e-15)
    assert np.allclose(rep.Q, -0.125 * a.conj().T @ a, atol=1e-15)
    assert rep.s == 4.0


def test_from_cavity_is_trace_preserving(jc_rep):
    assert _stationarity_defect(jc_rep) <= 1e-12
    assert len(jc_rep.R_unobs) == 1


def test_from_cavity_needs_one_observed_channel():
    a = jc_operators(2)["a"]
    H = np.zeros_like(a)
    none = CavitySystem(H, (Channel(1.0, a, observed=False),))
    two = CavitySystem(H, (Channel(1.0, a, observed=True), Channel(0.5, a, observed=True)))
    with pytest.raises(StructureError):
        from_cavity(none, s=1.0)
    with pytest.raises(StructureError):
        from_cavity(two, s=1.0)


def test_from_free_is_trace_preserving(free_rep):
    assert _stationarity_defect(free_rep) <= 1e-12


def test_rejects_non_trace_preserving_data():
    with pytest.raises(StructureError):
        CmpsRep(np.zeros((2, 2)), np.eye(2))


def test_free_params_need_hermitian_k():
    with pytest.raises(ValueError):
        FreeParams(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2))


def test_vacuum_has_no_field(vacuum_rep):
    obs = observables(vacuum_rep)
    assert (obs.n, obs.T, obs.G2_0) == (0.0, 0.0, 0.0)
    assert not np.any(g1(vacuum_rep, [0.0, 1.0, 5.0]).values)
    assert not np.any(g2(vacuum_rep, [0.0, 1.0, 5.0]).values)
    assert kinetic_fd(vacuum_rep, 1e-2) == 0.0


def test_cavity_vacuum_without_drive():
    rep = from_cavity(jaynes_cummings(JcParams(g=0.0, omega=0.0, kappa=1.0, gamma=0.25, n_max=3)), s=1.0)
    obs = observables(rep)
    assert obs.n <= 1e-12
    assert obs.G2_0 <= 1e-12
    assert obs.T <= 1e-12


def test_coherent_state():
    alpha = 0.8
    rep = coherent_rep(alpha)
    obs = observables(rep)
    assert obs.n == pytest.approx(alpha**2, rel=1e-12)
    assert obs.T == pytest.approx(0.0, abs=1e-14)
    assert obs.G2_0 == pytest.approx(alpha**4, rel=1e-12)

    taus = [0.0, 0.5, 3.0]
    assert np.allclose(g1(rep, taus).values, alpha**2, rtol=1e-10)
    assert np.allclose(g2(rep, taus).values, alpha**4, rtol=1e-10)


def test_photon_flux_identity(jc_rep, jc_params):
    rho = stationary(jc_rep).matrix
    a = jc_operators(jc_params.n_max)["a"]
    flux = jc_params.kappa * np.trace(a.conj().T @ a @ rho).real
    assert observables(jc_rep).n * jc_rep.s == pytest.approx(flux, rel=1e-10)


def test_cyclic_trace_identity(free_rep):
    rho = stationary(free_rep).matrix
    R = free_rep.R_obs
    assert np.trace(R.conj().T @ R @ rho) == pytest.approx(np.trace(R @ rho @ R.conj().T), abs=1e-12)


def test_correlators_match_dense_oracle(small_jc_rep):
    taus = [0.0, 0.5, 1.0, 2.0, 5.0]
    expected_g1, expected_g2 = _oracle_correlators(small_jc_rep, taus)
    scale = observables(small_jc_rep).n
    assert np.abs(g1(small_jc_rep, taus).values - expected_g1).max() <= 1e-8 * scale
    assert np.abs(g2(small_jc_rep, taus).values - expected_g2).max() <= 1e-8 * scale**2
    assert np.abs(g1(small_jc_rep, taus, method="expm").values - expected_g1).max() <= 1e-8 * scale


def test_correlator_anchors(jc_rep):
    obs = observables(jc_rep)
    taus = np.linspace(0.0, 10.0, 21)
    first = g1(jc_rep, taus)
    second = g2(jc_rep, taus)
    assert first.values[0] == pytest.approx(obs.n, rel=1e-10)
    assert first.values[0].imag == 0.0
    assert np.all(np.abs(first.values) <= first.values[0].real * (1 + 1e-10))
    assert second.values[0] == pytest.approx(obs.G2_0, rel=1e-10)
    assert np.all(second.values.imag == 0.0)


def test_g2_reaches_uncorrelated_limit(jc_rep):
    n = observables(jc_rep).n
    gap = spectral_gap(jc_rep.lab_liouvillian)
    late = g2(jc_rep, [20.0 / gap]).values[0].real
    assert late == pytest.approx(n**2, rel=1e-6)


def test_antibunching_under_weak_drive():
    rep = from_cavity(jaynes_cummings(JcParams(g=0.5, omega=0.02, kappa=1.0, gamma=0.1, n_max=4)), s=1.0)
    obs = observables(rep)
    assert obs.G2_0 < obs.n**2


def test_correlation_series_units(jc_rep):
    series = g2(jc_rep, [0.0, 1.0])
    lab = series.to_lab(jc_rep.s)
    assert lab.units == "lab"
    assert np.allclose(lab.values, series.values * jc_rep.s**2)
    n = observables(jc_rep).n
    assert np.allclose(series.normalized(n), series.values / n**2)


def test_correlation_series_rejects_bad_taus():
    with pytest.raises(ValueError):
        CorrelationSeries(np.array([0.0, 2.0, 1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        CorrelationSeries(np.array([-1.0, 0.0]), np.zeros(2))


def test_kinetic_fd_coherent_state():
    assert kinetic_fd(coherent_rep(0.6), 1e-2) == pytest.approx(0.0, abs=1e-8)


def test_kinetic_fd_converges_linearly(jc_rep):
    T = observables(jc_rep).T
    coarse = abs(kinetic_fd(jc_rep, 1e-2) - T)
    fine = abs(kinetic_fd(jc_rep, 1e-3) - T)
    assert coarse <= 0.1 * T
    assert fine <= 0.1 * T
    assert fine <= coarse / 5


def test_kinetic_fd_warns_on_large_offset(jc_rep):
    with pytest.warns(RuntimeWarning):
        kinetic_fd(jc_rep, 10.0)


def test_relax_boundary_forgets_initial_state(jc_rep):
    rng = np.random.default_rng(21)
    rho0 = random_density(rng, jc_rep.D)
    relaxed = relax_boundary(jc_rep, rho0, 400.0)
    assert np.abs(relaxed - stationary(jc_rep).matrix).max() <= 1e-6


def test_gauge_transformed_state_has_same_observables(free_rep):
    rng = np.random.default_rng(22)
    U = la.expm(1j * random_hermitian(rng, free_rep.D))
    Ud = U.conj().T
    moved = CmpsRep(U @ free_rep.Q @ Ud, U @ free_rep.R_obs @ Ud, (), free_rep.s)
    a, b = observables(free_rep), observables(moved)
    assert b.n == pytest.approx(a.n, rel=1e-10)
    assert b.T == pytest.approx(a.T, rel=1e-10)
    assert b.G2_0 == pytest.approx(a.G2_0, rel=1e-10)
