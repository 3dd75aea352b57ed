"""
Continuous Matrix Product States

The cMPS data (Q, R) generated by a cavity system or by free matrices, the
stationary reduced state of its auxiliary space, and every field-level
expectation value the energy functional needs.

Conventions
-----------
* Position and emission time are related by x = s * t.
* Field operators are normalised as psi = E / sqrt(s), so densities are
  per unit length: ``observables(rep).n`` is the photon flux divided by s.
* ``g1``/``g2`` take time separations ``taus`` in lab units (1/kappa) and
  return values in field units, so ``g1(0) == n`` and ``g2(tau) -> n**2``.
  ``CorrelationSeries.to_lab`` converts to photodetection units (s*g1, s**2*g2).
"""

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Tuple

import numpy as np

from utilities.algebra import (
    ComplexMatrix,
    Density,
    Superoperator,
    as_matrix,
    build_liouvillian,
    dagger,
    evolve_many,
    frozen,
    is_hermitian,
    spectral_gap,
    steady_state,
)
from utilities.cavity import CavitySystem
from utilities.errors import (
    DegenerateSpectrumError,
    DimensionMismatchError,
    NumericalHealthError,
    StructureError,
)

logger = logging.getLogger(__name__)

KINDS = ("g1", "g2")
STATIONARITY_TOL = 1e-10
HEALTH_TOL = 1e-10


# ============================================================================
# DOMAIN TYPES
# ============================================================================
@dataclass(frozen=True)
class CmpsRep:
    """
    cMPS data with one observed channel.

    Attributes:
        Q: D x D generator; Q + Q^dagger + sum R^dagger R = 0.
        R_obs: Observed (detected) channel.
        R_unobs: Channels that enter the dynamics but are never detected.
        s: Space-time scale, x = s * t.
    """

    Q: np.ndarray
    R_obs: np.ndarray
    R_unobs: Tuple[np.ndarray, ...] = ()
    s: float = 1.0

    def __post_init__(self):
        Q = as_matrix(self.Q, "Q")
        R = as_matrix(self.R_obs, "R_obs")
        unobs = tuple(as_matrix(Ru, "R_unobs") for Ru in self.R_unobs)
        for M in (R, *unobs):
            if M.shape != Q.shape:
                raise DimensionMismatchError(f"channel shape {M.shape} does not match Q shape {Q.shape}")
        if not self.s > 0:
            raise ValueError(f"s must be > 0, got {self.s}")

        defect = Q + dagger(Q) + sum((dagger(M) @ M for M in (R, *unobs)), np.zeros_like(Q))
        size = float(np.abs(defect).max())
        if size > STATIONARITY_TOL * max(1.0, float(np.abs(Q).max())):
            raise StructureError(f"Q + Q^dagger + sum R^dagger R = {size:.3e}, flow is not trace preserving")

        object.__setattr__(self, "Q", frozen(Q))
        object.__setattr__(self, "R_obs", frozen(R))
        object.__setattr__(self, "R_unobs", tuple(frozen(M) for M in unobs))
        object.__setattr__(self, "s", float(self.s))

    @property
    def D(self) -> int:
        return self.Q.shape[0]

    @property
    def channels(self) -> Tuple[np.ndarray, ...]:
        return (self.R_obs, *self.R_unobs)

    @property
    def is_vacuum(self) -> bool:
        """No amplitude in the observed channel: every field correlator vanishes."""
        return not np.any(self.R_obs)

    @cached_property
    def liouvillian(self) -> Superoperator:
        """Generator in field units (evolution along x)."""
        return build_liouvillian(self.Q, self.channels)

    @cached_property
    def lab_liouvillian(self) -> Superoperator:
        """Generator in lab units (evolution along t), s times the field generator."""
        return self.liouvillian.scaled(self.s)

    @cached_property
    def density(self) -> Density:
        return steady_state(self.liouvillian)


@dataclass(frozen=True)
class FreeParams:
    """Free cMPS matrices: Hermitian K, arbitrary R, scale s."""

    K: np.ndarray
    R: np.ndarray
    s: float = 1.0

    def __post_init__(self):
        K = as_matrix(self.K, "K")
        R = as_matrix(self.R, "R")
        if K.shape != R.shape:
            raise DimensionMismatchError(f"K shape {K.shape} does not match R shape {R.shape}")
        if not is_hermitian(K, atol=1e-12):
            raise ValueError("K must be Hermitian to 1e-12")
        if not self.s > 0:
            raise ValueError(f"s must be > 0, got {self.s}")
        object.__setattr__(self, "K", frozen(K))
        object.__setattr__(self, "R", frozen(R))

    @property
    def D(self) -> int:
        return self.K.shape[0]


@dataclass(frozen=True)
class FieldObservables:
    """Stationary single-point expectation values in field units."""

    n: float
    T: float
    G2_0: float


@dataclass(frozen=True)
class CorrelationSeries:
    taus: np.ndarray
    values: np.ndarray
    kind: str = "g1"
    units: str = field(default="field")

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        taus = _check_taus(self.taus)
        values = np.asarray(self.values, dtype=complex).ravel()
        if values.shape != taus.shape:
            raise ValueError(f"{values.size} values for {taus.size} taus")
        if not np.all(np.isfinite(values)):
            raise NumericalHealthError(f"{self.kind} series contains non-finite values")
        taus = taus.copy()
        taus.flags.writeable = False
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "values", frozen(values))

    def normalized(self, n: float) -> np.ndarray:
        """values / n for g1, values / n**2 for g2."""
        if n <= 0:
            raise ValueError("normalisation is undefined for a vanishing density")
        power = 1 if self.kind == "g1" else 2
        return np.asarray(self.values) / n**power

    def to_lab(self, s: float) -> "CorrelationSeries":
        """Photodetection units: s * g1, s**2 * g2."""
        if self.units == "lab":
            return self
        power = 1 if self.kind == "g1" else 2
        return CorrelationSeries(self.taus, np.asarray(self.values) * s**power, self.kind, units="lab")


# ============================================================================
# CONSTRUCTION
# ============================================================================
def from_cavity(sys: CavitySystem, s: float) -> CmpsRep:
    """
    Map a cavity system onto cMPS data.

    R_a = sqrt(rate_a / s) op_a for every channel and
    Q = -i H / s - 1/2 sum_a R_a^dagger R_a.

    Raises:
        StructureError: The system does not have exactly one observed channel.
    """
    if not s > 0:
        raise ValueError(f"s must be > 0, got {s}")
    observed = sys.observed
    if len(observed) != 1:
        raise StructureError(f"expected exactly one observed channel, found {len(observed)}")

    R_obs = np.sqrt(observed[0].rate / s) * np.asarray(observed[0].op)
    R_unobs = [np.sqrt(ch.rate / s) * np.asarray(ch.op) for ch in sys.unobserved]
    Q = -1j * np.asarray(sys.H) / s
    for R in (R_obs, *R_unobs):
        Q = Q - 0.5 * dagger(R) @ R
    return CmpsRep(Q, R_obs, tuple(R_unobs), s)


def from_free(p: FreeParams) -> CmpsRep:
    """cMPS in the left-canonical gauge: Q = (-iK - R^dagger R / 2)/s, R_obs = R/sqrt(s)."""
    R = np.asarray(p.R)
    Q = (-1j * np.asarray(p.K) - 0.5 * dagger(R) @ R) / p.s
    return CmpsRep(Q, R / np.sqrt(p.s), (), p.s)


# ============================================================================
# EXPECTATION VALUES
# ============================================================================
def stationary(rep: CmpsRep) -> Density:
    """Stationary state of the auxiliary system (all channels)."""
    return rep.density


def _healthy(value: complex, name: str, op_scale: float) -> float:
    tol = HEALTH_TOL * max(1.0, op_scale)
    if abs(value.imag) > tol:
        raise NumericalHealthError(f"{name} has imaginary part {value.imag:.3e}")
    if value.real < -tol:
        raise NumericalHealthError(f"{name} = {value.real:.3e} is negative beyond round-off")
    return max(0.0, float(value.real))


def observables(rep: CmpsRep) -> FieldObservables:
    """
    Density n = tr(R^dagger R rho), kinetic term T = tr([Q,R]^dagger [Q,R] rho)
    and contact pair density G2_0 = tr(R^dagger^2 R^2 rho), with R = R_obs.

    Raises:
        NumericalHealthError: A value is complex or negative beyond 1e-10.
    """
    if rep.is_vacuum:
        return FieldObservables(0.0, 0.0, 0.0)

    rho = stationary(rep).matrix
    R, Q = rep.R_obs, rep.Q
    Rd = dagger(R)
    C = Q @ R - R @ Q
    RR = R @ R

    n = _healthy(complex(np.trace(Rd @ R @ rho)), "n", float(np.linalg.norm(R, 2)) ** 2)
    T = _healthy(complex(np.trace(dagger(C) @ C @ rho)), "T", float(np.linalg.norm(C, 2)) ** 2)
    G2_0 = _healthy(complex(np.trace(dagger(RR) @ RR @ rho)), "G2_0", float(np.linalg.norm(RR, 2)) ** 2)
    return FieldObservables(n=n, T=T, G2_0=G2_0)


def _check_taus(taus) -> np.ndarray:
    taus = np.asarray(taus, dtype=float).ravel()
    if taus.size == 0:
        raise ValueError("taus must not be empty")
    if np.any(taus < 0) or not np.all(np.isfinite(taus)):
        raise ValueError("taus must be finite and non-negative")
    if np.any(np.diff(taus) <= 0):
        raise ValueError("taus must be strictly ascending")
    return taus


def g1(rep: CmpsRep, taus: Sequence[float], method: str = "ode") -> CorrelationSeries:
    """
    First-order correlator tr(R e^{L tau}[rho R^dagger]) by quantum regression.

    ``taus`` are lab time separations; ``g1(0) == n``. Negative separations
    follow from g1(-tau) = conj(g1(tau)).
    """
    taus = _check_taus(taus)
    if rep.is_vacuum:
        return CorrelationSeries(taus, np.zeros(taus.size), "g1")

    rho = stationary(rep).matrix
    R = rep.R_obs
    Xs = evolve_many(rep.lab_liouvillian, rho @ dagger(R), taus, method=method)
    values = np.array([np.trace(R @ X) for X in Xs], dtype=complex)
    values[taus == 0] = values[taus == 0].real
    return CorrelationSeries(taus, values, "g1")


def g2(rep: CmpsRep, taus: Sequence[float], method: str = "ode") -> CorrelationSeries:
    """Second-order correlator tr(R^dagger R e^{L tau}[R rho R^dagger]); real valued."""
    taus = _check_taus(taus)
    if rep.is_vacuum:
        return CorrelationSeries(taus, np.zeros(taus.size), "g2")

    rho = stationary(rep).matrix
    R = rep.R_obs
    N = dagger(R) @ R
    Xs = evolve_many(rep.lab_liouvillian, R @ rho @ dagger(R), taus, method=method)
    values = np.array([np.trace(N @ X) for X in Xs], dtype=complex)

    scale = max(1.0, float(np.abs(values).max()))
    imag = float(np.abs(values.imag).max())
    if imag > 1e-8 * scale:
        raise NumericalHealthError(f"g2 has imaginary part {imag:.3e}")
    return CorrelationSeries(taus, values.real, "g2")


def kinetic_fd(rep: CmpsRep, eps: float) -> float:
    """
    Kinetic energy density from two first-order correlator samples,

        T(eps) = [2 g1(0) - 2 Re g1(eps)] / (s eps)**2,

    with ``eps`` a lab time offset. Converges to ``observables(rep).T`` with
    an error linear in eps. A ``RuntimeWarning`` is issued when eps is not
    small against the slowest relaxation time (eps * gap > 0.1).
    """
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if rep.is_vacuum:
        return 0.0

    try:
        gap = spectral_gap(rep.lab_liouvillian)
    except DegenerateSpectrumError:
        gap = 0.0
    if eps * gap > 0.1:
        message = f"eps = {eps:g} is large against the relaxation rate {gap:.3g} (eps * gap = {eps * gap:.3g})"
        logger.warning(message)
        warnings.warn(message, RuntimeWarning, stacklevel=2)

    values = g1(rep, [0.0, eps]).values
    return float((2.0 * values[0].real - 2.0 * values[1].real) / (rep.s * eps) ** 2)


def relax_boundary(rep: CmpsRep, rho0, length: float) -> ComplexMatrix:
    """
    Evolve an arbitrary boundary state of the auxiliary system over ``length``
    (field units). For long lengths the result approaches ``stationary(rep)``
    whatever ``rho0`` was.
    """
    rho0 = as_matrix(rho0, "rho0")
    if not is_hermitian(rho0, atol=1e-10) or abs(np.trace(rho0) - 1) > 1e-10:
        raise ValueError("rho0 must be a Hermitian trace-one matrix")
    if length < 0:
        raise ValueError(f"length must be >= 0, got {length}")
    return evolve_many(rep.liouvillian, rho0, [length], method="ode")[0]
