"""
Lieb-Liniger Energy Functional

Energy density f = <T> + <W> + <N> of a cMPS for the contact-interacting
Bose gas, general two-body interaction energies and the scaling
transformation that maps any chemical potential onto mu = 1.

Scaling: rescale(rep, c) multiplies the generator by c, which leaves the
stationary state alone and sends (n, G2_0, T) to (c n, c**2 G2_0, c**3 T).
Hence

    f(v, mu) = c**3 f(v / c, 1)   with   c = sqrt(mu),

so a run at mu = 1 and interaction v/c answers the (v, mu) problem.
For cavity-derived states the same map is s -> s / c.
"""

import logging
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.integrate import simpson

from utilities.algebra import spectral_gap
from utilities.cmps import CmpsRep, FieldObservables, g2, observables
from utilities.errors import DegenerateSpectrumError, QuadratureError

logger = logging.getLogger(__name__)


# ============================================================================
# DOMAIN TYPES
# ============================================================================
@dataclass(frozen=True)
class LiebLinigerParams:
    """
    Contact interaction strength ``v`` and chemical potential ``mu``.

    v = 0 leaves the functional unbounded below for mu > 0 and is rejected.
    """

    v: float
    mu: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.v) and self.v > 0):
            raise ValueError(f"v must be a finite number > 0, got {self.v}")
        if not np.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")


@dataclass(frozen=True)
class EnergyBreakdown:
    T: float
    W: float
    N: float
    f: float

    @classmethod
    def from_terms(cls, T: float, W: float, N: float) -> "EnergyBreakdown":
        return cls(T=T, W=W, N=N, f=T + W + N)

    def scaled(self, factor: float) -> "EnergyBreakdown":
        return EnergyBreakdown.from_terms(factor * self.T, factor * self.W, factor * self.N)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class Kernel:
    """
    Two-body potential w(x) = delta_weight * delta(x) + smooth(|x|).

    ``smooth`` must accept a numpy array of separations; ``None`` means zero.
    Separations are in field units (x = s t).
    """

    delta_weight: float = 0.0
    smooth: Optional[Callable[[np.ndarray], np.ndarray]] = None
    cutoff: float = 10.0

    def __post_init__(self):
        if self.delta_weight < 0:
            raise ValueError(f"delta_weight must be >= 0, got {self.delta_weight}")
        if not self.cutoff > 0:
            raise ValueError(f"cutoff must be > 0, got {self.cutoff}")


# ============================================================================
# ENERGY
# ============================================================================
def energy_from_observables(obs: FieldObservables, p: LiebLinigerParams) -> EnergyBreakdown:
    return EnergyBreakdown.from_terms(obs.T, p.v * obs.G2_0, -p.mu * obs.n)


def energy_density(rep: CmpsRep, p: LiebLinigerParams) -> EnergyBreakdown:
    """
    f = tr([Q,R]^dagger [Q,R] rho) + v tr(R^dagger^2 R^2 rho) - mu tr(R^dagger R rho).

    Raises:
        NumericalHealthError: Propagated from ``cmps.observables``.
    """
    return energy_from_observables(observables(rep), p)


def lieb_liniger_gamma(obs: FieldObservables, p: LiebLinigerParams) -> float:
    """Dimensionless coupling v / n of a state."""
    return p.v / obs.n if obs.n > 0 else float("inf")


def interaction_general(
    rep: CmpsRep,
    k: Kernel,
    rtol: float = 1e-7,
    max_intervals: int = 4096,
) -> float:
    """
    Interaction energy density for an arbitrary kernel,

        W = delta_weight * G2(0) + 2 * integral_0^cutoff smooth(x) G2(x) dx,

    with the integral done by composite Simpson on a grid that doubles until
    two successive estimates agree to ``rtol``.

    Raises:
        QuadratureError: No agreement by ``max_intervals`` intervals.
    """
    obs = observables(rep)
    W = k.delta_weight * obs.G2_0
    if k.smooth is None or rep.is_vacuum:
        return W

    try:
        length = rep.s / spectral_gap(rep.lab_liouvillian)
    except DegenerateSpectrumError:
        length = 0.0
    if k.cutoff < 5.0 * length:
        message = f"cutoff {k.cutoff:g} is shorter than five correlation lengths ({length:.3g})"
        logger.warning(message)
        warnings.warn(message, RuntimeWarning, stacklevel=2)

    previous = current = None
    intervals = 16
    while intervals <= max_intervals:
        x = np.linspace(0.0, k.cutoff, intervals + 1)
        G2 = g2(rep, x / rep.s).values.real
        weights = np.asarray(k.smooth(x), dtype=float) * np.ones_like(x)
        current = float(simpson(weights * G2, x=x))
        if previous is not None:
            change = abs(current - previous)
            if change <= rtol * max(abs(current), 1e-300):
                logger.debug(f"quadrature converged with {intervals} intervals")
                return W + 2.0 * current
        previous = current
        intervals *= 2

    raise QuadratureError(
        f"interaction integral not converged to rtol={rtol:g} with {max_intervals} intervals",
        tail_estimate=abs(current - previous) if current is not None and previous is not None else float("nan"),
    )


# ============================================================================
# SCALING
# ============================================================================
def rescale(rep: CmpsRep, c: float) -> CmpsRep:
    """Q -> c Q and R -> sqrt(c) R for every channel; s unchanged."""
    if not c > 0:
        raise ValueError(f"c must be > 0, got {c}")
    root = np.sqrt(c)
    return CmpsRep(
        c * np.asarray(rep.Q),
        root * np.asarray(rep.R_obs),
        tuple(root * np.asarray(R) for R in rep.R_unobs),
        rep.s,
    )


def unit_problem(p: LiebLinigerParams) -> Tuple[LiebLinigerParams, float]:
    """
    The mu = 1 problem equivalent to ``p`` and the factor c = sqrt(mu).

    Raises:
        ValueError: mu <= 0, where the vacuum is the ground state.
    """
    if p.mu <= 0:
        raise ValueError(f"scaling recipe needs mu > 0, got {p.mu}")
    c = float(np.sqrt(p.mu))
    return LiebLinigerParams(v=p.v / c, mu=1.0), c


def from_unit_solution(rep_unit: CmpsRep, breakdown_unit: EnergyBreakdown, c: float) -> Tuple[CmpsRep, EnergyBreakdown]:
    """Map a mu = 1 optimum back to the original problem."""
    return rescale(rep_unit, c), breakdown_unit.scaled(c**3)
