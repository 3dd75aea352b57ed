"""
Cavity-QED Simulator Models

The driven, on-resonance Jaynes-Cummings system (one two-level atom, one
cavity mode) with cavity decay and spontaneous emission, plus the
cooperativity and truncation diagnostics that decide whether a parameter set
is usable.

Units: kappa = 1 sets the time unit once a run configuration has been
resolved; every rate here is a plain float in those units.

Basis: qubit (x) Fock, |g> = 0, |e> = 1, state |q, n> at index q*(n_max+1) + n.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from utilities.algebra import ComplexMatrix, as_matrix, dagger, frozen, is_hermitian
from utilities.errors import DimensionMismatchError, SteadyStateAmbiguityError, TruncationError

logger = logging.getLogger(__name__)

OBSERVABLES = ("density", "g2_0", "energy")
MAX_N_MAX = 32
DEFAULT_N_MAX = 8


# ============================================================================
# DOMAIN TYPES
# ============================================================================
@dataclass(frozen=True)
class JcParams:
    """
    Parameters of the driven Jaynes-Cummings system.

    Attributes:
        g: Atom-cavity coupling.
        omega: Coherent drive of the atom.
        kappa: Cavity field decay rate (sets the time unit).
        gamma: Spontaneous-emission amplitude rate; populations decay at 2*gamma.
        n_max: Fock-space truncation (photon numbers 0..n_max).
    """

    g: float
    omega: float
    kappa: float = 1.0
    gamma: float = 0.0
    n_max: int = DEFAULT_N_MAX

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max}")
        if not (np.isfinite(self.g) and np.isfinite(self.omega)):
            raise ValueError("g and omega must be finite")


@dataclass(frozen=True)
class Channel:
    """Decay channel sqrt(rate) * op."""

    rate: float
    op: np.ndarray
    observed: bool
    label: str = ""

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"channel rate must be > 0, got {self.rate}")
        object.__setattr__(self, "op", frozen(as_matrix(self.op, "channel op")))


@dataclass(frozen=True)
class CavitySystem:
    """Hermitian Hamiltonian plus decay channels.

    The single-observed-channel requirement is enforced where it matters
    (``cmps.from_cavity``), so malformed systems can still be constructed
    and inspected.
    """

    H: np.ndarray
    channels: Tuple[Channel, ...] = ()
    params: Optional[JcParams] = None

    def __post_init__(self):
        H = as_matrix(self.H, "H")
        if not is_hermitian(H, atol=1e-12):
            raise ValueError("H must be Hermitian to 1e-12")
        for ch in self.channels:
            if ch.op.shape != H.shape:
                raise DimensionMismatchError(f"channel {ch.label!r} has shape {ch.op.shape}, H has {H.shape}")
        object.__setattr__(self, "H", frozen(H))
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def labels(self) -> List[str]:
        return [ch.label for ch in self.channels]

    @property
    def observed(self) -> List[Channel]:
        return [ch for ch in self.channels if ch.observed]

    @property
    def unobserved(self) -> List[Channel]:
        return [ch for ch in self.channels if not ch.observed]


@dataclass(frozen=True)
class CoopReport:
    C: float
    tau: float
    coherence_time: float
    feasible: bool
    strong_coupling: bool = field(default=False)


# ============================================================================
# CONSTRUCTION
# ============================================================================
def jc_operators(n_max: int) -> Dict[str, ComplexMatrix]:
    """Ladder operators on the qubit (x) Fock space: a, a_dag, sigma_minus, sigma_plus."""
    nf = n_max + 1
    a = np.diag(np.sqrt(np.arange(1, nf, dtype=float)), k=1).astype(complex)
    sm = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    A = np.kron(np.eye(2), a)
    SM = np.kron(sm, np.eye(nf))
    return {"a": A, "a_dag": dagger(A), "sigma_minus": SM, "sigma_plus": dagger(SM)}


def jaynes_cummings(p: JcParams) -> CavitySystem:
    """
    Build the driven Jaynes-Cummings system.

    H = g (sigma+ a + sigma- a_dag) + omega (sigma+ + sigma-), with an observed
    cavity channel sqrt(kappa) a and, when gamma > 0, an unobserved
    spontaneous-emission channel sqrt(2 gamma) sigma-.

    Args:
        p: Validated parameters.

    Returns:
        CavitySystem: dim = 2 * (n_max + 1).
    """
    ops = jc_operators(p.n_max)
    A, SM, SP = ops["a"], ops["sigma_minus"], ops["sigma_plus"]
    H = p.g * (SP @ A + SM @ ops["a_dag"]) + p.omega * (SP + SM)
    H = 0.5 * (H + dagger(H))

    channels = [Channel(p.kappa, A, observed=True, label="cavity")]
    if p.gamma > 0:
        channels.append(Channel(2.0 * p.gamma, SM, observed=False, label="spontaneous"))
    return CavitySystem(H, tuple(channels), params=p)


def cooperativity(g: float, kappa: float, gamma: float) -> CoopReport:
    """
    Cooperativity C = g^2/(kappa gamma), feature time tau = kappa/g^2 and
    atomic coherence time 1/(2 gamma).

    ``feasible`` is tau <= 1/(2 gamma), which is the same statement as C >= 2;
    ``strong_coupling`` is C >= 1.

    Examples:
        >>> cooperativity(2.0, 1.0, 1.0)
        CoopReport(C=4.0, tau=0.25, coherence_time=0.5, feasible=True, strong_coupling=True)
    """
    if not kappa > 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")

    g2 = float(g) ** 2
    tau = kappa / g2 if g2 > 0 else float("inf")
    if gamma == 0:
        return CoopReport(C=float("inf"), tau=tau, coherence_time=float("inf"), feasible=True, strong_coupling=True)

    C = g2 / (kappa * gamma)
    coherence_time = 1.0 / (2.0 * gamma)
    return CoopReport(
        C=C,
        tau=tau,
        coherence_time=coherence_time,
        feasible=bool(tau <= coherence_time),
        strong_coupling=bool(C >= 1.0),
    )


# ============================================================================
# DIAGNOSTICS
# ============================================================================
def photon_number_distribution(p: JcParams, rho) -> np.ndarray:
    """P(n) for n = 0..n_max, traced over the atom."""
    diag = np.real(np.diag(np.asarray(rho))).reshape(2, p.n_max + 1)
    return diag.sum(axis=0)


def atom_excitation(p: JcParams, rho) -> float:
    """Excited-state population of the atom."""
    diag = np.real(np.diag(np.asarray(rho))).reshape(2, p.n_max + 1)
    return float(diag[1].sum())


def _observable_at(p: JcParams, observable: str) -> float:
    # cmps imports this module
    from utilities import cmps

    obs = cmps.observables(cmps.from_cavity(jaynes_cummings(p), s=1.0))
    if observable == "density":
        return obs.n
    if observable == "g2_0":
        return obs.G2_0
    # energy density at v = mu = 1
    return obs.T + obs.G2_0 - obs.n


@lru_cache(maxsize=256)
def _converged_cutoff(p: JcParams, observable: str, tol: float) -> int:
    if p.g == 0 and p.omega == 0:
        # decoupled and undriven: the cavity stays in vacuum at any truncation
        return 1

    values: Dict[int, float] = {}

    def value(n: int) -> float:
        if n not in values:
            try:
                values[n] = _observable_at(replace(p, n_max=n), observable)
            except SteadyStateAmbiguityError as exc:
                raise TruncationError(
                    f"{observable} undefined at n_max = {n}: the stationary state is not unique",
                    sequence=[values[k] for k in sorted(values)],
                ) from exc
        return values[n]

    for n in range(1, MAX_N_MAX - 1):
        lo, hi = value(n), value(n + 2)
        scale = max(abs(lo), abs(hi))
        change = abs(hi - lo) / scale if scale > 0 else 0.0
        logger.debug(f"truncation {observable}: n_max={n} -> {n + 2}, relative change {change:.3e}")
        if change < tol:
            return n

    sequence = [values[n] for n in sorted(values)]
    raise TruncationError(
        f"{observable} not converged to {tol:g} by n_max = {MAX_N_MAX}",
        sequence=sequence,
    )


def truncation_converged(p: JcParams, observable: str = "density", tol: float = 1e-6) -> int:
    """
    Smallest n_max for which ``observable`` changes by less than ``tol``
    (relative) when the truncation grows by two.

    Results are memoised per (parameters without n_max, observable, tol).

    Raises:
        TruncationError: No convergence by n_max = 32; carries the sequence.
            Also raised, chained to the ambiguity error, when the stationary
            state is not unique (e.g. g = 0 with gamma = 0 and a drive).
    """
    if observable not in OBSERVABLES:
        raise ValueError(f"observable must be one of {OBSERVABLES}, got {observable!r}")
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    return _converged_cutoff(replace(p, n_max=1), observable, float(tol))


def converged_params(p: JcParams, observable: str = "density", tol: float = 1e-6) -> JcParams:
    """``p`` with n_max raised to the converged truncation when it is too small."""
    needed = truncation_converged(p, observable, tol)
    if needed > p.n_max:
        logger.info(f"raising n_max from {p.n_max} to {needed} ({observable} converged to {tol:g})")
        return replace(p, n_max=needed)
    return p
