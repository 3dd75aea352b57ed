"""
Dense Superoperator Machinery

Liouvillian construction, stationary-state solving and the action of the
exponential propagator for small open quantum systems (operator dimension up
to about 64).

Vectorisation convention
------------------------
Operators are vectorised by column stacking,

    vec(A @ X @ B) == kron(B.T, A) @ vec(X),

so left multiplication is ``kron(I, A)`` and right multiplication is
``kron(B.T, I)``. ``vec``/``unvec`` below are the only places where the
convention is spelled out; every other module goes through them.

Example:
    >>> L = build_liouvillian(Q, [R])
    >>> rho = steady_state(L)
    >>> X = evolve(L, rho.matrix @ R.conj().T, 1.5)
"""

import logging
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg as la
from opentelemetry import trace
from scipy.integrate import solve_ivp

from config.settings import get_settings
from utilities.errors import (
    DegenerateSpectrumError,
    DimensionMismatchError,
    IntegrationError,
    SolverError,
    SteadyStateAmbiguityError,
)

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

# Dense complex square matrix. Hermiticity/positivity are checked by predicates.
ComplexMatrix = np.ndarray

EVOLVE_METHODS = ("ode", "expm", "auto")


# ============================================================================
# BASIC HELPERS
# ============================================================================
def as_matrix(X, name: str = "matrix") -> ComplexMatrix:
    """Return ``X`` as a complex square array, rejecting anything else."""
    M = np.asarray(X, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    return M


def frozen(X) -> ComplexMatrix:
    """Read-only complex copy of ``X``."""
    M = np.array(X, dtype=complex, copy=True)
    M.flags.writeable = False
    return M


def dagger(X) -> ComplexMatrix:
    return np.asarray(X).conj().T


def is_hermitian(X, atol: float = 1e-12) -> bool:
    M = np.asarray(X)
    return bool(np.allclose(M, M.conj().T, rtol=0.0, atol=atol))


def vec(X) -> np.ndarray:
    """Column-stacking vectorisation."""
    return np.asarray(X).reshape(-1, order="F")


def unvec(v, dim: Optional[int] = None) -> ComplexMatrix:
    """Inverse of :func:`vec`."""
    v = np.asarray(v)
    d = dim if dim is not None else int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise DimensionMismatchError(f"vector of length {v.size} is not a vectorised {d}x{d} operator")
    return v.reshape(d, d, order="F")


def spre(A) -> np.ndarray:
    """Superoperator X -> A X."""
    A = np.asarray(A)
    return np.kron(np.eye(A.shape[0]), A)


def spost(B) -> np.ndarray:
    """Superoperator X -> X B."""
    B = np.asarray(B)
    return np.kron(B.T, np.eye(B.shape[0]))


def sprepost(A, B) -> np.ndarray:
    """Superoperator X -> A X B."""
    return np.kron(np.asarray(B).T, np.asarray(A))


def lindblad_q(H, channels: Sequence[ComplexMatrix]) -> ComplexMatrix:
    """Q = -iH - 1/2 sum_a R_a^dagger R_a, the trace-preserving partner of ``channels``."""
    H = as_matrix(H, "H")
    Q = -1j * H
    for R in channels:
        R = as_matrix(R, "channel")
        Q = Q - 0.5 * dagger(R) @ R
    return Q


# ============================================================================
# DOMAIN TYPES
# ============================================================================
@dataclass(frozen=True)
class Superoperator:
    """Linear map on dim x dim operators, stored as its dim**2 x dim**2 matrix."""

    dim: int
    matrix: np.ndarray

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("Superoperator dim must be >= 1")
        M = np.asarray(self.matrix, dtype=complex)
        if M.shape != (self.dim**2, self.dim**2):
            raise DimensionMismatchError(
                f"superoperator matrix must be {self.dim**2}x{self.dim**2}, got {M.shape}"
            )
        object.__setattr__(self, "matrix", frozen(M))

    def apply(self, X) -> ComplexMatrix:
        X = as_matrix(X, "X")
        if X.shape[0] != self.dim:
            raise DimensionMismatchError(f"operator dim {X.shape[0]} does not match superoperator dim {self.dim}")
        return unvec(self.matrix @ vec(X), self.dim)

    def apply_adjoint(self, X) -> ComplexMatrix:
        """Adjoint with respect to the Hilbert-Schmidt product tr(A^dagger B)."""
        X = as_matrix(X, "X")
        if X.shape[0] != self.dim:
            raise DimensionMismatchError(f"operator dim {X.shape[0]} does not match superoperator dim {self.dim}")
        return unvec(self.matrix.conj().T @ vec(X), self.dim)

    def scaled(self, c: float) -> "Superoperator":
        return Superoperator(self.dim, c * self.matrix)

    @property
    def scale(self) -> float:
        """Largest entry magnitude, floored at one; sets absolute tolerances."""
        return max(1.0, float(np.abs(self.matrix).max()))


@dataclass(frozen=True)
class Density:
    """Stationary density matrix together with solver diagnostics."""

    matrix: np.ndarray
    residual: float
    method: str = "bordered"
    asymmetry: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "matrix", frozen(as_matrix(self.matrix, "density")))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def expect(self, op) -> complex:
        """tr(op rho)."""
        return complex(np.trace(np.asarray(op) @ self.matrix))

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix).min())


# ============================================================================
# OPERATIONS
# ============================================================================
def build_liouvillian(Q, channels: Sequence[ComplexMatrix]) -> Superoperator:
    """
    Build the generator L(X) = Q X + X Q^dagger + sum_a R_a X R_a^dagger.

    Args:
        Q: Non-Hermitian effective generator (D x D).
        channels: Jump operators R_a, each D x D.

    Returns:
        Superoperator: The dense vectorised generator.

    Raises:
        DimensionMismatchError: If the matrices do not share one dimension.
    """
    Q = as_matrix(Q, "Q")
    d = Q.shape[0]
    M = spre(Q) + spost(dagger(Q))
    for k, R in enumerate(channels):
        R = as_matrix(R, f"channel {k}")
        if R.shape[0] != d:
            raise DimensionMismatchError(f"channel {k} has dim {R.shape[0]}, Q has dim {d}")
        M = M + sprepost(R, dagger(R))
    return Superoperator(d, M)


def _bordered_solve(M: np.ndarray, d: int, cond_limit: float):
    """Solve L(rho) = 0 with the (0, 0) row replaced by weight * tr(rho) = weight."""
    nonzero = np.count_nonzero(M)
    weight = float(np.abs(M).sum() / nonzero) if nonzero else 1.0

    A = np.array(M, copy=True)
    A[0, :] = 0.0
    A[0, np.arange(d) * (d + 1)] = weight
    b = np.zeros(d * d, dtype=complex)
    b[0] = weight

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", la.LinAlgWarning)
        lu, piv = la.lu_factor(A, check_finite=False)
    anorm = np.linalg.norm(A, 1)
    rcond, info = la.lapack.zgecon(lu, anorm, norm="1")
    cond = np.inf if rcond == 0 or info != 0 else 1.0 / rcond
    if not np.isfinite(cond) or cond > cond_limit:
        logger.debug(f"bordered system ill-conditioned (cond ~ {cond:.3e}), falling back to null vector")
        return None, cond
    return la.lu_solve((lu, piv), b, check_finite=False), cond


def _null_vector(M: np.ndarray, d: int, scale: float) -> np.ndarray:
    """Right singular vector of the smallest singular value; rejects a degenerate kernel."""
    _, S, Vh = la.svd(M)
    if S.size >= 2 and S[-2] <= 1e-8 * scale:
        candidates = []
        for k in (-1, -2):
            cand = unvec(Vh[k].conj(), d)
            tr = np.trace(cand)
            candidates.append(cand / tr if abs(tr) > 1e-14 else cand)
        raise SteadyStateAmbiguityError(
            f"stationary state is not unique: two singular values {S[-1]:.3e}, {S[-2]:.3e} are numerically zero",
            candidates=candidates,
            singular_values=[float(S[-1]), float(S[-2])],
        )
    return Vh[-1].conj()


def steady_state(
    L: Superoperator,
    cond_limit: Optional[float] = None,
    asym_tol: float = 1e-10,
    residual_tol: float = 1e-10,
    pos_tol: float = 1e-10,
) -> Density:
    """
    Find the unique trace-one fixed point of a Lindblad generator.

    A bordered linear system (one row of the generator replaced by the
    trace-one constraint) is solved first; when its condition estimate exceeds
    ``cond_limit`` the null vector of the generator is taken from an SVD.

    Args:
        L: Generator built from a trace-preserving (Q, {R_a}) family.
        cond_limit: Condition-estimate threshold for the fallback
            (default from settings, 1e12).
        asym_tol: Allowed anti-Hermitian part before symmetrisation.
        residual_tol: Allowed ||L(rho)||_F, relative to ``L.scale``.
        pos_tol: Allowed negative eigenvalue magnitude.

    Returns:
        Density: The stationary state with residual and method.

    Raises:
        SteadyStateAmbiguityError: Kernel of ``L`` is not one-dimensional.
        SolverError: Result fails the residual, Hermiticity or positivity checks.
    """
    cond_limit = get_settings().cond_limit if cond_limit is None else cond_limit
    d = L.dim
    M = np.asarray(L.matrix)

    with tracer.start_as_current_span("cavityfield.steady_state") as span:
        span.set_attribute("dim", d)
        if d == 1:
            residual = float(abs(M[0, 0]))
            if residual > residual_tol * L.scale:
                raise SolverError("1x1 generator is not trace preserving", residual)
            return Density(np.ones((1, 1)), residual, method="trivial")

        x, cond = _bordered_solve(M, d, cond_limit)
        method = "bordered"
        if x is None:
            x = _null_vector(M, d, L.scale)
            method = "null-vector"
        span.set_attribute("method", method)

        rho = unvec(x, d)
        tr = np.trace(rho)
        if abs(tr) < 1e-14:
            raise SolverError("stationary candidate has vanishing trace")
        rho = rho / tr

        asymmetry = float(np.abs(rho - dagger(rho)).max())
        logger.debug(f"steady state via {method}: cond ~ {cond:.3e}, pre-symmetrisation asymmetry {asymmetry:.3e}")
        if asymmetry > asym_tol:
            raise SolverError(f"stationary state is not Hermitian (asymmetry {asymmetry:.3e})")

        rho = 0.5 * (rho + dagger(rho))
        rho = rho / np.trace(rho).real
        residual = float(np.linalg.norm(M @ vec(rho)))
        if residual > residual_tol * L.scale:
            raise SolverError(f"steady-state residual {residual:.3e} exceeds tolerance", residual)

        lam_min = float(np.linalg.eigvalsh(rho).min())
        if lam_min < -pos_tol:
            raise SolverError(f"stationary state has negative eigenvalue {lam_min:.3e}", residual)

        return Density(rho, residual, method=method, asymmetry=asymmetry)


def evolve_many(
    L: Superoperator,
    X0,
    taus: Sequence[float],
    method: str = "ode",
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
) -> List[ComplexMatrix]:
    """
    Apply e^{L tau} to ``X0`` for every tau in ``taus`` (non-decreasing, >= 0).

    ``method="ode"`` integrates dX/dt = L(X) with adaptive DOP853;
    ``method="expm"`` forms the dense exponential; ``method="auto"`` picks
    ``expm`` when dim**2 is within the expm threshold.

    Raises:
        IntegrationError: The integrator stopped early (e.g. step-size underflow).
    """
    settings = get_settings()
    X0 = as_matrix(X0, "X0")
    if X0.shape[0] != L.dim:
        raise DimensionMismatchError(f"X0 has dim {X0.shape[0]}, generator has dim {L.dim}")
    taus = np.asarray(taus, dtype=float).ravel()
    if taus.size == 0:
        return []
    if np.any(taus < 0) or np.any(np.diff(taus) < 0):
        raise ValueError("taus must be non-negative and non-decreasing")
    if method not in EVOLVE_METHODS:
        raise ValueError(f"method must be one of {EVOLVE_METHODS}")

    d2 = L.dim**2
    if method == "auto":
        method = "expm" if d2 <= settings.expm_max_dim2 else "ode"

    M = np.asarray(L.matrix)
    v0 = vec(X0)

    if method == "expm":
        if d2 > settings.expm_max_dim2:
            raise ValueError(f"dense exponential limited to dim**2 <= {settings.expm_max_dim2}, got {d2}")
        return [X0.copy() if t == 0 else unvec(la.expm(M * t) @ v0, L.dim) for t in taus]

    if d2 > settings.ode_max_dim2:
        raise ValueError(f"dense integration limited to dim**2 <= {settings.ode_max_dim2}, got {d2}")
    t_end = float(taus[-1])
    norm0 = float(np.linalg.norm(v0))
    if t_end == 0.0 or norm0 == 0.0 or not np.any(M):
        return [X0.copy() for _ in taus]

    rtol = settings.ode_rtol if rtol is None else rtol
    atol = settings.ode_atol if atol is None else atol
    sol = solve_ivp(
        lambda t, y: M @ y,
        (0.0, t_end),
        v0,
        method="DOP853",
        t_eval=taus,
        rtol=rtol,
        atol=atol * norm0,
    )
    if sol.status != 0:
        t_reached = float(sol.t[-1]) if sol.t.size else 0.0
        raise IntegrationError(
            f"integration failed at t={t_reached:.6g} of {t_end:.6g}: {sol.message}",
            t_reached=t_reached,
            nfev=int(sol.nfev),
        )
    return [X0.copy() if t == 0 else unvec(sol.y[:, k], L.dim) for k, t in enumerate(taus)]


def evolve(L: Superoperator, X0, tau: float, method: str = "ode", **kwargs) -> ComplexMatrix:
    """Return e^{L tau}(X0). See :func:`evolve_many` for the methods."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    return evolve_many(L, X0, [tau], method=method, **kwargs)[0]


def spectral_gap(L: Superoperator, zero_tol: float = 1e-12) -> float:
    """
    Smallest |Re lambda| over the nonzero eigenvalues of ``L``.

    Raises:
        DegenerateSpectrumError: If every eigenvalue is (numerically) zero.
    """
    eigenvalues = la.eigvals(np.asarray(L.matrix))
    nonzero = eigenvalues[np.abs(eigenvalues) > zero_tol * L.scale]
    if nonzero.size == 0:
        raise DegenerateSpectrumError("generator has no nonzero eigenvalue")
    return float(np.min(np.abs(nonzero.real)))
