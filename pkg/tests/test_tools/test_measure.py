import numpy as np
import pytest

from tests.conftest import coherent_rep
from tools.optimizer import OptimizerConfig, VariationalSpace, minimize
from utilities.cmps import g1, g2, observables
from utilities.measure import NoiseModel, energy_draws, noisy_correlator, noisy_energy, noisy_minimize
from utilities.model import LiebLinigerParams

SCALAR = VariationalSpace.free_cmps(D=1)


def _scalar_lambda(alpha: float):
    return SCALAR.encode_free(np.zeros((1, 1)), np.array([[alpha]]), 1.0)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(shots=0)
    with pytest.raises(ValueError):
        NoiseModel(shots=10, scheme="homodyne")


def test_same_seed_same_estimate(jc_rep):
    nm = NoiseModel(shots=1000, seed=7)
    assert noisy_correlator(jc_rep, "g2", 0.5, nm) == noisy_correlator(jc_rep, "g2", 0.5, nm)
    other = noisy_correlator(jc_rep, "g2", 0.5, NoiseModel(shots=1000, seed=8))
    assert other.mean != noisy_correlator(jc_rep, "g2", 0.5, nm).mean


def test_many_shots_approach_exact_values(jc_rep):
    nm = NoiseModel(shots=10**12, seed=3)
    exact = {
        "intensity": observables(jc_rep).n,
        "g1": g1(jc_rep, [0.0, 1.0]).values[1],
        "g2": g2(jc_rep, [1.0]).values[0].real,
    }
    for kind, value in exact.items():
        est = noisy_correlator(jc_rep, kind, 1.0, nm)
        assert abs(est.mean - value) <= 6 * est.stderr
        assert est.stderr <= 1e-5 * max(1.0, abs(value))


def test_stderr_scales_with_shots(jc_rep):
    few = noisy_correlator(jc_rep, "intensity", 0.0, NoiseModel(shots=10**4))
    many = noisy_correlator(jc_rep, "intensity", 0.0, NoiseModel(shots=10**6))
    assert few.stderr / many.stderr == pytest.approx(10.0, rel=1e-12)


def test_estimates_are_unbiased(jc_rep):
    n = observables(jc_rep).n
    means = [noisy_correlator(jc_rep, "intensity", 0.0, NoiseModel(shots=100, seed=k)).mean.real for k in range(100)]
    sigma = noisy_correlator(jc_rep, "intensity", 0.0, NoiseModel(shots=100)).stderr
    assert abs(np.mean(means) - n) <= 4 * sigma / 10


def test_vacuum_is_noiseless(vacuum_rep):
    est = noisy_correlator(vacuum_rep, "intensity", 0.0, NoiseModel(shots=10))
    assert est.mean == 0 and est.stderr == 0.0
    energy = noisy_energy(vacuum_rep, LiebLinigerParams(v=1.0), 1e-2, NoiseModel(shots=10))
    assert energy.mean == 0 and energy.stderr == 0.0


def test_scheme_restricts_the_estimator(jc_rep):
    with pytest.raises(ValueError):
        noisy_correlator(jc_rep, "g1", 1.0, NoiseModel(shots=10, scheme="hbt"))
    est = noisy_correlator(jc_rep, "g1", 1.0, NoiseModel(shots=10, scheme="interferometer"))
    assert est.shots == 10


def test_energy_draws_are_reproducible():
    assert energy_draws(5) == energy_draws(5)
    assert energy_draws(5) != energy_draws(6)
    assert set(energy_draws(0)) == {"intensity", "g2", "g1_0_re", "g1_0_im", "g1_eps_re", "g1_eps_im"}


def test_noisy_energy_of_coherent_state():
    alpha = 0.8
    est = noisy_energy(coherent_rep(alpha), LiebLinigerParams(v=1.0), 1e-2, NoiseModel(shots=10**8, seed=2))
    assert abs(est.mean.real - (alpha**4 - alpha**2)) <= 5 * est.stderr
    assert set(est.components) == {"T", "W", "N"}


def test_noisy_energy_stderr_falls_with_shots(jc_rep):
    p = LiebLinigerParams(v=1.0)
    coarse = noisy_energy(jc_rep, p, 1e-2, NoiseModel(shots=10**4)).stderr
    fine = noisy_energy(jc_rep, p, 1e-2, NoiseModel(shots=10**6)).stderr
    assert 5.0 <= coarse / fine <= 20.0


def test_noisy_descent_with_negligible_noise():
    p = LiebLinigerParams(v=1.0)
    cfg = OptimizerConfig(step=0.05, tol=1e-10)
    exact = minimize(SCALAR, _scalar_lambda(0.3), p, cfg)
    noisy = noisy_minimize(SCALAR, _scalar_lambda(0.3), p, cfg, NoiseModel(shots=10**12, seed=1), eps=1.0)
    assert noisy.breakdown.f == pytest.approx(exact.f_star, abs=1e-4)
    assert all(entry.stderr > 0 for entry in noisy.trace)


def test_noisy_descent_with_realistic_noise():
    p = LiebLinigerParams(v=1.0)
    cfg = OptimizerConfig(step=0.2)
    result = noisy_minimize(SCALAR, _scalar_lambda(0.3), p, cfg, NoiseModel(shots=10**6, seed=4), eps=3.0)
    assert observables(SCALAR.build(result.lambda_star)).n == pytest.approx(0.5, abs=0.05)


def test_noisy_descent_with_few_shots():
    p = LiebLinigerParams(v=1.0)
    cfg = OptimizerConfig(step=0.05)
    exact = minimize(SCALAR, _scalar_lambda(0.3), p, cfg)
    result = noisy_minimize(SCALAR, _scalar_lambda(0.3), p, cfg, NoiseModel(shots=10, seed=9), eps=1.0)
    stderr = max(entry.stderr for entry in result.trace)
    assert not result.converged or abs(result.breakdown.f - exact.f_star) <= 10 * stderr
