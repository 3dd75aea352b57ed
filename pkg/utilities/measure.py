"""
Shot-Noise Emulation of the Optical Measurements

Exact correlators plus Gaussian estimator noise for the three detection
schemes: direct intensity, Hanbury Brown-Twiss coincidences (g2) and a
variable-path interferometer (g1 at two offsets). Values are in field units.

Noise per estimator:
    intensity, g2: sigma = sqrt(value * (1 + value)) / sqrt(shots), real
    g1:            sigma = sqrt(g1(0)) / sqrt(shots) on each quadrature
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from tools.optimizer import OptimizerConfig, OptResult, VariationalSpace, evaluate, minimize_objective
from utilities.cmps import CmpsRep, g1, g2, observables
from utilities.errors import CavityFieldError, EvaluationError
from utilities.model import LiebLinigerParams

logger = logging.getLogger(__name__)

SCHEMES = {"intensity": "intensity", "hbt": "g2", "interferometer": "g1"}
KINDS = ("intensity", "g1", "g2")

# standard-normal draws consumed by one energy estimate
_ENERGY_DRAWS = ("intensity", "g2", "g1_0_re", "g1_0_im", "g1_eps_re", "g1_eps_im")


@dataclass(frozen=True)
class NoiseModel:
    """
    Attributes:
        shots: Detection samples per estimator.
        seed: Seed of every draw.
        scheme: Restrict to one detection panel ("intensity", "hbt",
            "interferometer"); None allows all three.
    """

    shots: int
    seed: int = 0
    scheme: Optional[str] = None

    def __post_init__(self):
        if int(self.shots) != self.shots or self.shots < 1:
            raise ValueError(f"shots must be an integer >= 1, got {self.shots}")
        if self.scheme is not None and self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {sorted(SCHEMES)} or None, got {self.scheme!r}")


@dataclass(frozen=True)
class Estimate:
    mean: complex
    stderr: float
    shots: int
    components: Dict[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be >= 0")


def _poisson_sigma(value: float, shots: int) -> float:
    value = max(0.0, value)
    return float(np.sqrt(value * (1.0 + value)) / np.sqrt(shots))


def _g1_sigma(g1_0: float, shots: int) -> float:
    return float(np.sqrt(max(0.0, g1_0)) / np.sqrt(shots))


def noisy_correlator(rep: CmpsRep, kind: str, tau: float, nm: NoiseModel) -> Estimate:
    """
    One shot-noise-limited estimate of the intensity, g1(tau) or g2(tau).

    Deterministic for fixed ``nm.seed``.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    if nm.scheme is not None and SCHEMES[nm.scheme] != kind:
        raise ValueError(f"scheme {nm.scheme!r} measures {SCHEMES[nm.scheme]}, not {kind}")
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")

    rng = np.random.default_rng(nm.seed)
    if kind == "intensity":
        value = observables(rep).n
        sigma = _poisson_sigma(value, nm.shots)
        return Estimate(complex(value + sigma * rng.standard_normal()), sigma, nm.shots)
    if kind == "g2":
        value = float(g2(rep, [tau]).values[0].real)
        sigma = _poisson_sigma(value, nm.shots)
        return Estimate(complex(value + sigma * rng.standard_normal()), sigma, nm.shots)

    taus = [0.0] if tau == 0 else [0.0, tau]
    values = g1(rep, taus).values
    sigma = _g1_sigma(values[0].real, nm.shots)
    z_re, z_im = rng.standard_normal(2)
    return Estimate(complex(values[-1] + sigma * (z_re + 1j * z_im)), sigma, nm.shots)


def energy_draws(seed: int) -> Dict[str, float]:
    """Standard-normal draws for one energy estimate, one per estimator."""
    children = np.random.SeedSequence(seed).spawn(len(_ENERGY_DRAWS))
    return {name: float(np.random.default_rng(child).standard_normal()) for name, child in zip(_ENERGY_DRAWS, children)}


def energy_estimate(rep: CmpsRep, p: LiebLinigerParams, eps: float, shots: int, draws: Dict[str, float]) -> Estimate:
    """
    Energy density assembled from noisy measurements with given noise draws.

    T from g1 at offsets 0 and eps, W = v * G2(0), N = -mu * intensity;
    standard errors combined in quadrature.
    """
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")

    n = observables(rep).n
    sigma_n = _poisson_sigma(n, shots)
    intensity = n + sigma_n * draws["intensity"]

    G2 = float(g2(rep, [0.0]).values[0].real)
    sigma_g2 = _poisson_sigma(G2, shots)
    pair = G2 + sigma_g2 * draws["g2"]

    values = g1(rep, [0.0, eps]).values
    sigma_g1 = _g1_sigma(values[0].real, shots)
    re_0 = values[0].real + sigma_g1 * draws["g1_0_re"]
    re_eps = values[1].real + sigma_g1 * draws["g1_eps_re"]
    scale = (rep.s * eps) ** 2
    T = (2.0 * re_0 - 2.0 * re_eps) / scale
    sigma_T = np.sqrt(8.0) * sigma_g1 / scale

    W = p.v * pair
    N = -p.mu * intensity
    stderr = float(np.sqrt(sigma_T**2 + (p.v * sigma_g2) ** 2 + (p.mu * sigma_n) ** 2))
    return Estimate(complex(T + W + N), stderr, shots, components={"T": T, "W": W, "N": N})


def noisy_energy(rep: CmpsRep, p: LiebLinigerParams, eps: float, nm: NoiseModel) -> Estimate:
    """Energy density as the laboratory would estimate it from ``nm.shots`` samples per estimator."""
    return energy_estimate(rep, p, eps, nm.shots, energy_draws(nm.seed))


def noisy_minimize(
    space: VariationalSpace,
    lam0,
    p: LiebLinigerParams,
    cfg: OptimizerConfig,
    nm: NoiseModel,
    eps: float = 1e-2,
) -> OptResult:
    """
    Run the descent on the measured energy instead of the exact one.

    The noise is quenched: one draw per estimator, fixed by ``nm.seed`` for
    the whole run, so the noisy objective is a deterministic function of
    lambda. Each step's stderr is recorded in the trace and the stopping test
    uses max(tol, 3 * stderr). The returned breakdown is the exact energy at
    the final point.
    """
    draws = energy_draws(nm.seed)

    def objective(lam):
        lam = np.asarray(lam, dtype=float)
        try:
            est = energy_estimate(space.build(lam), p, eps, nm.shots, draws)
        except (CavityFieldError, ValueError, np.linalg.LinAlgError) as exc:
            raise EvaluationError(f"noisy evaluation failed at lambda = {lam.tolist()}: {exc}", lam=lam.copy()) from exc
        return est.mean.real, est.stderr

    result = minimize_objective(objective, lam0, cfg)
    result.breakdown = evaluate(space, result.lambda_star, p)
    logger.info(
        f"noisy descent ({nm.shots} shots): f_est = {result.f_star:.8g}, "
        f"exact f = {result.breakdown.f:.8g}, {result.message}"
    )
    return result
