"""
Variational Optimizer

Finite-difference gradient descent of the energy density over either the
three experimental controls of the cavity (g, omega, s) or the matrices of a
free cMPS, and sweeps of that descent over interaction strengths.

The descent is the plain update lambda <- lambda - eps * grad f with a
guard: a step that raises f is rejected and eps is halved, an accepted step
multiplies eps by ``grow``. It stops when an accepted step changes f by less
than tol, when eps underflows, or after max_iter steps.

Problems at mu != 1 are solved at mu = 1 and mapped back by the scaling
transformation (``minimize_via_unit``).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from opentelemetry import trace

from utilities.cavity import JcParams, jaynes_cummings
from utilities.cmps import CmpsRep, FreeParams, from_cavity, from_free
from utilities.errors import CavityFieldError, EvaluationError, GradientError
from utilities.model import EnergyBreakdown, LiebLinigerParams, energy_density, from_unit_solution, unit_problem

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

MODES = ("cavity3", "free_cmps")
EMBED_COUPLING = 1e-3

Bounds = Tuple[Tuple[float, float], ...]


# ============================================================================
# PARAMETER SPACES
# ============================================================================
@dataclass(frozen=True)
class VariationalSpace:
    """
    Map from a real parameter vector lambda to a cMPS.

    ``cavity3``: lambda = (g, omega, log s) with kappa, gamma, n_max fixed.
    ``free_cmps``: lambda = (K entries, R entries, log s) where K is packed as
    its D diagonal reals followed by (Re, Im) of each upper off-diagonal
    entry (D**2 reals), and R as its real parts then imaginary parts, row
    major (2 D**2 reals). With ``free_k=False`` K is fixed to zero and its
    entries are dropped. With ``log_scale=False`` the last entry is s itself.
    """

    mode: str = "cavity3"
    kappa: float = 1.0
    gamma: float = 0.0
    n_max: int = 8
    D: int = 2
    free_k: bool = True
    log_scale: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "cavity3":
            JcParams(0.0, 0.0, self.kappa, self.gamma, self.n_max)
        if int(self.D) != self.D or self.D < 1:
            raise ValueError(f"D must be an integer >= 1, got {self.D}")

    @classmethod
    def cavity3(cls, kappa: float = 1.0, gamma: float = 0.0, n_max: int = 8, log_scale: bool = True):
        return cls(mode="cavity3", kappa=kappa, gamma=gamma, n_max=n_max, log_scale=log_scale)

    @classmethod
    def free_cmps(cls, D: int, free_k: bool = True, log_scale: bool = True):
        return cls(mode="free_cmps", D=D, free_k=free_k, log_scale=log_scale)

    @property
    def size(self) -> int:
        if self.mode == "cavity3":
            return 3
        return (self.D**2 if self.free_k else 0) + 2 * self.D**2 + 1

    @property
    def scale_name(self) -> str:
        return "log_s" if self.log_scale else "s"

    def names(self) -> List[str]:
        if self.mode == "cavity3":
            return ["g", "omega", self.scale_name]
        D = self.D
        names = []
        if self.free_k:
            names += [f"K{i}{i}" for i in range(D)]
            for i in range(D):
                for j in range(i + 1, D):
                    names += [f"ReK{i}{j}", f"ImK{i}{j}"]
        names += [f"ReR{i}{j}" for i in range(D) for j in range(D)]
        names += [f"ImR{i}{j}" for i in range(D) for j in range(D)]
        return names + [self.scale_name]

    def _check(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float).ravel()
        if lam.size != self.size:
            raise ValueError(f"{self.mode} space expects {self.size} parameters, got {lam.size}")
        return lam

    def scale(self, lam) -> float:
        lam = self._check(lam)
        s = float(np.exp(lam[-1])) if self.log_scale else float(lam[-1])
        if not s > 0:
            raise ValueError(f"scale s must be > 0, got {s}")
        return s

    def encode_scale(self, s: float) -> float:
        return float(np.log(s)) if self.log_scale else float(s)

    def decode_free(self, lam) -> FreeParams:
        """Unpack a free_cmps vector into (K, R, s)."""
        lam = self._check(lam)
        D = self.D
        pos = 0
        K = np.zeros((D, D), dtype=complex)
        if self.free_k:
            K[np.diag_indices(D)] = lam[:D]
            pos = D
            for i in range(D):
                for j in range(i + 1, D):
                    K[i, j] = lam[pos] + 1j * lam[pos + 1]
                    K[j, i] = np.conj(K[i, j])
                    pos += 2
        R = (lam[pos : pos + D * D] + 1j * lam[pos + D * D : pos + 2 * D * D]).reshape(D, D)
        return FreeParams(K, R, self.scale(lam))

    def encode_free(self, K, R, s: float) -> np.ndarray:
        """Inverse of :meth:`decode_free`."""
        D = self.D
        K = np.asarray(K, dtype=complex).reshape(D, D)
        R = np.asarray(R, dtype=complex).reshape(D, D)
        parts: List[float] = []
        if self.free_k:
            parts += list(np.real(np.diag(K)))
            for i in range(D):
                for j in range(i + 1, D):
                    parts += [K[i, j].real, K[i, j].imag]
        parts += list(R.real.ravel()) + list(R.imag.ravel())
        parts.append(self.encode_scale(s))
        return np.array(parts, dtype=float)

    def jc_params(self, lam) -> JcParams:
        lam = self._check(lam)
        return JcParams(g=float(lam[0]), omega=float(lam[1]), kappa=self.kappa, gamma=self.gamma, n_max=self.n_max)

    def build(self, lam) -> CmpsRep:
        if self.mode == "cavity3":
            return from_cavity(jaynes_cummings(self.jc_params(lam)), self.scale(lam))
        return from_free(self.decode_free(lam))

    def default_lambda0(self, seed: int = 0) -> np.ndarray:
        """(g, omega, s) = (1, 0.5, 1) for the cavity; small random matrices for a free cMPS."""
        if self.mode == "cavity3":
            return np.array([1.0, 0.5, self.encode_scale(1.0)])
        rng = np.random.default_rng(seed)
        D = self.D
        K = 0.1 * rng.normal(size=(D, D)) + 0.1j * rng.normal(size=(D, D))
        R = 0.5 * np.eye(D) + 0.2 * (rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D)))
        return self.encode_free(0.5 * (K + K.conj().T) if self.free_k else np.zeros((D, D)), R, 1.0)

    def rescaled(self, lam, c: float) -> np.ndarray:
        """Parameters of rescale(build(lam), c): the scale becomes s / c."""
        lam = self._check(lam).copy()
        lam[-1] = self.encode_scale(self.scale(lam) / c)
        return lam

    def describe(self, lam) -> Dict[str, float]:
        lam = self._check(lam)
        info = dict(zip(self.names(), (float(x) for x in lam)))
        info["s"] = self.scale(lam)
        return info


def embed(space: VariationalSpace, lam, D_to: int) -> Tuple[VariationalSpace, np.ndarray]:
    """
    Embed a free cMPS of dimension D into dimension D < ``D_to`` <= 2 D.

    K and R are zero padded; a weak jump of amplitude 1e-3 from padded state
    D + j into original state j keeps the stationary state unique.
    Every jump returns the state to the original block, so the padded
    population and the shift of n, G2(0) and T are second order in the
    coupling (about 1e-6).
    """
    if space.mode != "free_cmps":
        raise ValueError("embed applies to free_cmps spaces only")
    if not space.D < D_to <= 2 * space.D:
        raise ValueError(f"D_to must lie in ({space.D}, {2 * space.D}], got {D_to}")

    p = space.decode_free(lam)
    D = space.D
    K = np.zeros((D_to, D_to), dtype=complex)
    R = np.zeros((D_to, D_to), dtype=complex)
    K[:D, :D] = p.K
    R[:D, :D] = p.R
    for j in range(D_to - D):
        R[j, D + j] = EMBED_COUPLING
    bigger = replace(space, D=D_to)
    return bigger, bigger.encode_free(K, R, p.s)


# ============================================================================
# CONFIGURATION AND RESULTS
# ============================================================================
@dataclass(frozen=True)
class OptimizerConfig:
    """
    Descent settings.

    Attributes:
        step: Initial step size eps.
        fd_delta: Relative finite-difference step.
        tol: Stop when |f(lambda) - f(lambda')| < tol.
        max_iter: Iteration cap.
        bounds: Optional closed interval per parameter; steps are clipped.
        restarts: Extra runs from random perturbations of lambda0.
        seed: Seed for the restarts.
        jobs: Threads used for gradient evaluations.
        grow: Factor applied to eps after an accepted step; 1 keeps eps
            fixed until a rejection halves it.
    """

    step: float = 1e-2
    fd_delta: float = 1e-4
    tol: float = 1e-9
    max_iter: int = 5000
    bounds: Optional[Bounds] = None
    restarts: int = 0
    seed: int = 0
    jobs: int = 1
    grow: float = 2.0
    min_step: float = 1e-12

    def __post_init__(self):
        for name in ("step", "fd_delta", "tol", "min_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be an integer >= 1, got {self.max_iter}")
        if self.restarts < 0:
            raise ValueError(f"restarts must be >= 0, got {self.restarts}")
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")
        if not self.grow >= 1.0:
            raise ValueError(f"grow must be >= 1, got {self.grow}")
        if self.bounds is not None:
            bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
            for k, (lo, hi) in enumerate(bounds):
                if not lo <= hi:
                    raise ValueError(f"bounds[{k}] = ({lo}, {hi}) is empty")
            object.__setattr__(self, "bounds", bounds)


class TraceEntry(NamedTuple):
    iteration: int
    f: float
    accepted: bool
    step: float
    stderr: float = 0.0


@dataclass
class OptResult:
    lambda_star: np.ndarray
    f_star: float
    breakdown: Optional[EnergyBreakdown]
    trace: List[TraceEntry] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    message: str = ""
    multi_start: bool = False
    error: Optional[str] = None

    def accepted_fs(self) -> List[float]:
        return [entry.f for entry in self.trace if entry.accepted]

    def to_dict(self) -> Dict:
        return {
            "lambda_star": [float(x) for x in self.lambda_star],
            "f_star": float(self.f_star),
            "breakdown": self.breakdown.to_dict() if self.breakdown is not None else None,
            "converged": self.converged,
            "iterations": self.iterations,
            "message": self.message,
            "multi_start": self.multi_start,
            "error": self.error,
        }


# ============================================================================
# EVALUATION AND GRADIENTS
# ============================================================================
def evaluate(space: VariationalSpace, lam, p: LiebLinigerParams) -> EnergyBreakdown:
    """
    Energy breakdown of the state ``space.build(lam)``.

    Raises:
        EvaluationError: The state could not be built or its stationary state
            could not be found; carries ``lam``.
    """
    lam = np.asarray(lam, dtype=float)
    with tracer.start_as_current_span("cavityfield.evaluate"):
        try:
            return energy_density(space.build(lam), p)
        except (CavityFieldError, ValueError, np.linalg.LinAlgError) as exc:
            raise EvaluationError(f"evaluation failed at lambda = {lam.tolist()}: {exc}", lam=lam.copy()) from exc


def central_gradient(
    fun: Callable[[np.ndarray], float],
    lam,
    fd_delta: float = 1e-4,
    jobs: int = 1,
) -> np.ndarray:
    """
    Central differences with step fd_delta * max(|lambda_i|, 1) per component.

    Raises:
        GradientError: A shifted evaluation failed; identifies the component.
    """
    lam = np.asarray(lam, dtype=float)
    steps = fd_delta * np.maximum(np.abs(lam), 1.0)

    def component(i: int) -> float:
        e = np.zeros_like(lam)
        e[i] = steps[i]
        try:
            return (fun(lam + e) - fun(lam - e)) / (2.0 * steps[i])
        except CavityFieldError as exc:
            raise GradientError(f"gradient component {i} failed: {exc}", component=i) from exc

    if jobs > 1 and lam.size > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return np.array(list(pool.map(component, range(lam.size))))
    return np.array([component(i) for i in range(lam.size)])


def grad_fd(
    space: VariationalSpace,
    lam,
    p: LiebLinigerParams,
    fd_delta: float = 1e-4,
    jobs: int = 1,
    bounds: Optional[Bounds] = None,
) -> np.ndarray:
    """Finite-difference gradient of ``evaluate(space, lam, p).f``."""
    lam = np.asarray(lam, dtype=float)
    if bounds is not None:
        steps = fd_delta * np.maximum(np.abs(lam), 1.0)
        lo, hi = np.array(bounds, dtype=float).T
        if np.any(lam - steps < lo) or np.any(lam + steps > hi):
            raise ValueError("lambda must lie inside the bounds by at least one finite-difference step")
    return central_gradient(lambda x: evaluate(space, x, p).f, lam, fd_delta, jobs)


# ============================================================================
# DESCENT
# ============================================================================
Objective = Callable[[np.ndarray], Union[float, Tuple[float, float]]]


def _value(objective: Objective, lam: np.ndarray) -> Tuple[float, float]:
    out = objective(lam)
    if isinstance(out, tuple):
        return float(out[0]), float(out[1])
    return float(out), 0.0


def _clip(lam: np.ndarray, bounds: Optional[Bounds]) -> np.ndarray:
    if bounds is None:
        return lam
    lo, hi = np.array(bounds, dtype=float).T
    return np.clip(lam, lo, hi)


def minimize_objective(
    objective: Objective,
    lam0,
    cfg: OptimizerConfig,
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> OptResult:
    """
    Guarded gradient descent on an arbitrary objective.

    ``objective`` returns f or (f, stderr); with a stderr the stopping test
    uses max(tol, 3 * stderr). ``gradient`` defaults to central differences
    of the objective's value.

    Returns:
        OptResult: ``breakdown`` is left empty; ``lambda_star`` is the last
        accepted point.
    """
    lam = np.asarray(lam0, dtype=float).copy()
    if cfg.bounds is not None:
        if len(cfg.bounds) != lam.size:
            raise ValueError(f"{len(cfg.bounds)} bounds for {lam.size} parameters")
        if not np.array_equal(_clip(lam, cfg.bounds), lam):
            raise ValueError("lambda0 lies outside the bounds")
    if gradient is None:
        gradient = lambda x: central_gradient(lambda y: _value(objective, y)[0], x, cfg.fd_delta, cfg.jobs)  # noqa: E731

    f, err = _value(objective, lam)
    step = cfg.step
    trace_entries = [TraceEntry(0, f, True, step, err)]
    grad = None
    converged = False
    message = f"max_iter = {cfg.max_iter} reached"
    iteration = 0

    for iteration in range(1, cfg.max_iter + 1):
        if grad is None:
            try:
                grad = np.asarray(gradient(lam), dtype=float)
            except GradientError as exc:
                message = f"gradient failed at accepted point: {exc}"
                logger.warning(message)
                break
            if not np.all(np.isfinite(grad)):
                message = "gradient is not finite"
                break
            if not np.any(grad):
                converged = True
                message = "zero gradient"
                break

        candidate = _clip(lam - step * grad, cfg.bounds)
        try:
            f_new, err_new = _value(objective, candidate)
        except EvaluationError as exc:
            logger.debug(f"step rejected, evaluation failed: {exc}")
            f_new, err_new = float("inf"), 0.0

        accepted = f_new <= f
        trace_entries.append(TraceEntry(iteration, f_new, accepted, step, err_new))
        change = abs(f - f_new)
        tol = max(cfg.tol, 3.0 * max(err, err_new))
        if accepted:
            lam, f, err = candidate, f_new, err_new
            grad = None
            step *= cfg.grow
        else:
            step *= 0.5

        if iteration % 100 == 0:
            logger.debug(f"iteration {iteration}: f = {f:.12g}, step = {step:.3g}")
        if accepted and change < tol:
            converged = True
            message = f"|delta f| = {change:.3e} < tol = {tol:.3e}"
            break
        if step < cfg.min_step:
            message = f"stagnation: step fell below {cfg.min_step:g}"
            break

    return OptResult(
        lambda_star=lam,
        f_star=f,
        breakdown=None,
        trace=trace_entries,
        converged=converged,
        iterations=iteration,
        message=message,
    )


def minimize(
    space: VariationalSpace,
    lam0,
    p: LiebLinigerParams,
    cfg: OptimizerConfig = OptimizerConfig(),
) -> OptResult:
    """
    Minimise the energy density over ``space`` starting at ``lam0``.

    Evaluation failures during a step count as rejected steps. With
    ``cfg.restarts`` > 0 further runs start from random perturbations of
    ``lam0`` and the lowest result is kept.

    Raises:
        EvaluationError: ``lam0`` itself cannot be evaluated.
    """
    lam0 = np.asarray(lam0, dtype=float)
    with tracer.start_as_current_span("cavityfield.minimize") as span:
        span.set_attribute("mode", space.mode)
        span.set_attribute("v", p.v)
        span.set_attribute("mu", p.mu)

        objective = lambda lam: evaluate(space, lam, p).f  # noqa: E731
        gradient = lambda lam: grad_fd(space, lam, p, cfg.fd_delta, cfg.jobs)  # noqa: E731
        best = minimize_objective(objective, lam0, cfg, gradient)

        rng = np.random.default_rng(cfg.seed)
        for r in range(cfg.restarts):
            start = _clip(lam0 + 0.5 * rng.normal(size=lam0.size) * np.maximum(np.abs(lam0), 1.0), cfg.bounds)
            try:
                result = minimize_objective(objective, start, cfg, gradient)
            except EvaluationError as exc:
                logger.warning(f"restart {r + 1} skipped: {exc}")
                continue
            logger.info(f"restart {r + 1}: f = {result.f_star:.10g} (best {best.f_star:.10g})")
            if result.f_star < best.f_star:
                best = result

        best.breakdown = evaluate(space, best.lambda_star, p)
        span.set_attribute("f_star", best.f_star)
        span.set_attribute("converged", best.converged)
        logger.info(
            f"v = {p.v:g}: f* = {best.f_star:.10g} after {best.iterations} iterations "
            f"({'converged' if best.converged else 'not converged'}: {best.message})"
        )
        return best


def minimize_via_unit(
    space: VariationalSpace,
    lam0,
    p: LiebLinigerParams,
    cfg: OptimizerConfig = OptimizerConfig(),
) -> OptResult:
    """
    Minimise at mu = 1 with v / sqrt(mu) and map the optimum back.

    ``lam0`` and the result are in the parameters of the original problem;
    the scale s absorbs the factor c = sqrt(mu), so the trace, f* and the
    breakdown are those of the original problem (the unit values times c**3).
    mu = 1, mu <= 0 and bounded descents go straight to ``minimize``.
    """
    if p.mu == 1.0 or p.mu <= 0 or cfg.bounds is not None:
        return minimize(space, lam0, p, cfg)
    unit, c = unit_problem(p)
    logger.info(f"mu = {p.mu:g}: solving v = {unit.v:g} at mu = 1 and rescaling by c = {c:g}")
    result = minimize(space, space.rescaled(lam0, 1.0 / c), unit, cfg)
    _, breakdown = from_unit_solution(space.build(result.lambda_star), result.breakdown, c)
    factor = c**3
    result.lambda_star = space.rescaled(result.lambda_star, c)
    result.breakdown = breakdown
    result.f_star = breakdown.f
    result.trace = [entry._replace(f=factor * entry.f, stderr=factor * entry.stderr) for entry in result.trace]
    return result


def _failed(lam0: np.ndarray, exc: Exception) -> OptResult:
    return OptResult(
        lambda_star=np.asarray(lam0, dtype=float),
        f_star=float("nan"),
        breakdown=None,
        converged=False,
        message="failed",
        error=str(exc),
    )


def sweep(
    space: VariationalSpace,
    v_list: Sequence[float],
    mu: float,
    lam0,
    cfg: OptimizerConfig = OptimizerConfig(),
    warm_start: bool = True,
    jobs: int = 1,
    compare_starts: bool = False,
    rescale_mu: bool = True,
) -> List[OptResult]:
    """
    One minimisation per interaction strength, in input order.

    Warm start (default) seeds each entry with the previous optimum and runs
    sequentially; cold start runs every entry from ``lam0``, using up to
    ``jobs`` threads. ``compare_starts`` runs both and keeps the lower f*,
    setting ``multi_start`` when they differ by more than 1e-4.
    With ``rescale_mu`` each entry at mu != 1 is solved at mu = 1 and mapped
    back; pass False to re-optimise directly at the given mu.
    A failing entry is recorded with ``error`` set and the sweep continues.
    """
    if len(v_list) == 0:
        raise ValueError("v_list must not be empty")
    params = [LiebLinigerParams(v=float(v), mu=mu) for v in v_list]
    lam0 = np.asarray(lam0, dtype=float)

    def run_entry(p: LiebLinigerParams, start: np.ndarray) -> OptResult:
        with tracer.start_as_current_span("cavityfield.sweep.entry") as span:
            span.set_attribute("v", p.v)
            try:
                if rescale_mu:
                    return minimize_via_unit(space, start, p, cfg)
                return minimize(space, start, p, cfg)
            except CavityFieldError as exc:
                logger.error(f"sweep entry v = {p.v:g} failed: {exc}")
                return _failed(start, exc)

    if warm_start:
        if jobs > 1:
            logger.info("warm-started sweeps run sequentially; ignoring jobs")
        results = []
        start = lam0
        for p in params:
            result = run_entry(p, start)
            results.append(result)
            if result.error is None:
                start = result.lambda_star
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda p: run_entry(p, lam0), params))

    if compare_starts:
        others = sweep(space, v_list, mu, lam0, cfg, warm_start=not warm_start, jobs=jobs, rescale_mu=rescale_mu)
        merged = []
        for mine, other in zip(results, others):
            if other.error is None and (mine.error is not None or other.f_star < mine.f_star - 1e-4):
                other.multi_start = True
                merged.append(other)
            else:
                mine.multi_start = other.error is None and abs(mine.f_star - other.f_star) > 1e-4
                merged.append(mine)
        results = merged
    return results
