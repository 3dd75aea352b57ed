"""
Run Configuration

Experiment descriptions are TOML files (JSON with the same structure is
accepted, which is what every output file embeds). ``load_config`` parses a
file, converts physical rates to kappa = 1 units and validates every section,
reporting all violations at once.

Schema (see config/runs/README.md for the full description):

    [system]     mode, kappa, gamma, n_max, g, omega, s, D, free_k,
                 log_scale, auto_truncate
    [units]      physical, rate_unit
    [model]      v | v_list, mu, rescale_mu
    [optimizer]  step, fd_delta, tol, max_iter, bounds, restarts, seed,
                 jobs, grow, warm_start, compare_starts
    [noise]      shots, seed, scheme, eps
    [correlate]  taus, kind
    [output]     dir, format
"""

import json
import logging
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from config.settings import get_settings
from tools.optimizer import OptimizerConfig, VariationalSpace
from utilities.cavity import JcParams, converged_params
from utilities.errors import CavityFieldError, ConfigError
from utilities.measure import NoiseModel
from utilities.model import LiebLinigerParams

logger = logging.getLogger(__name__)

OUTPUT_FORMATS = ("csv", "json")
CORRELATOR_KINDS = ("g1", "g2")

_SECTIONS: Dict[str, Tuple[str, ...]] = {
    "system": ("mode", "kappa", "gamma", "n_max", "g", "omega", "s", "D", "free_k", "log_scale", "auto_truncate"),
    "units": ("physical", "rate_unit", "factor"),
    "model": ("v", "v_list", "mu", "rescale_mu"),
    "optimizer": (
        "step", "fd_delta", "tol", "max_iter", "bounds", "restarts", "seed", "jobs", "grow", "warm_start",
        "compare_starts",
    ),
    "noise": ("shots", "seed", "scheme", "eps"),
    "correlate": ("taus", "kind"),
    "output": ("dir", "format"),
}
# rates (and the rate-like scale s) divided by kappa when given in physical units
_RATE_KEYS = ("kappa", "gamma", "g", "omega", "s")


# ============================================================================
# DOMAIN TYPES
# ============================================================================
@dataclass(frozen=True)
class SystemConfig:
    mode: str = "cavity3"
    kappa: float = 1.0
    gamma: float = 0.0
    n_max: int = 8
    g: float = 1.0
    omega: float = 0.5
    s: float = 1.0
    D: int = 2
    free_k: bool = True
    log_scale: bool = True
    auto_truncate: bool = False

    def jc_params(self) -> JcParams:
        return JcParams(self.g, self.omega, self.kappa, self.gamma, self.n_max)

    def space(self) -> VariationalSpace:
        if self.mode == "cavity3":
            return VariationalSpace.cavity3(self.kappa, self.gamma, self.n_max, self.log_scale)
        return VariationalSpace.free_cmps(self.D, self.free_k, self.log_scale)

    def lambda0(self, seed: int = 0) -> np.ndarray:
        space = self.space()
        if self.mode == "cavity3":
            return np.array([self.g, self.omega, space.encode_scale(self.s)])
        return space.default_lambda0(seed)


@dataclass(frozen=True)
class NoiseConfig:
    shots: int = 1_000_000
    seed: int = 0
    scheme: Optional[str] = None
    eps: float = 1e-2

    def model(self) -> NoiseModel:
        return NoiseModel(self.shots, self.seed, self.scheme)


@dataclass(frozen=True)
class RunConfig:
    """Resolved experiment description; all rates in kappa = 1 units."""

    system: SystemConfig = field(default_factory=SystemConfig)
    v_list: Tuple[float, ...] = (1.0,)
    mu: float = 1.0
    rescale_mu: bool = True
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    warm_start: bool = True
    compare_starts: bool = False
    noise: Optional[NoiseConfig] = None
    taus: Optional[str] = None
    kind: str = "g2"
    output_dir: str = "results"
    output_format: Optional[str] = None
    unit_factor: float = 1.0
    rate_unit: str = "kappa"
    source: str = ""

    @property
    def model(self) -> LiebLinigerParams:
        return LiebLinigerParams(self.v_list[0], self.mu)

    def to_physical(self, rate: float) -> float:
        """Convert an internal rate back to the units the config was written in."""
        return rate * self.unit_factor

    def resolved(self) -> Dict[str, Any]:
        """JSON-serialisable form; reloading it reproduces this config exactly."""
        opt = asdict(self.optimizer)
        opt["bounds"] = [list(b) for b in self.optimizer.bounds] if self.optimizer.bounds is not None else None
        opt.pop("min_step")
        opt["warm_start"] = self.warm_start
        opt["compare_starts"] = self.compare_starts
        data: Dict[str, Any] = {
            "system": asdict(self.system),
            "units": {"physical": False, "rate_unit": self.rate_unit, "factor": self.unit_factor},
            "model": {"v_list": list(self.v_list), "mu": self.mu, "rescale_mu": self.rescale_mu},
            "optimizer": {k: v for k, v in opt.items() if v is not None},
            "output": {"dir": self.output_dir},
            "correlate": {"kind": self.kind},
        }
        if self.output_format is not None:
            data["output"]["format"] = self.output_format
        if self.taus is not None:
            data["correlate"]["taus"] = self.taus
        if self.noise is not None:
            data["noise"] = {k: v for k, v in asdict(self.noise).items() if v is not None}
        return data


# ============================================================================
# PARSING
# ============================================================================
def parse_taus(spec: str) -> np.ndarray:
    """
    Parse ``START:STEP:END`` into an ascending grid including END.

    Example:
        >>> parse_taus("0:0.5:2")
        array([0. , 0.5, 1. , 1.5, 2. ])
    """
    try:
        start, step, end = (float(x) for x in str(spec).split(":"))
    except ValueError:
        raise ValueError(f"taus must look like START:STEP:END, got {spec!r}")
    if start < 0 or step <= 0 or end < start:
        raise ValueError(f"taus {spec!r} needs 0 <= START <= END and STEP > 0")
    count = int(np.floor((end - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def _read(path: Path) -> Dict[str, Any]:
    if path.suffix.lower() == ".json":
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    with open(path, "rb") as f:
        return tomllib.load(f)


def _take(section: Dict[str, Any], name: str, key: str, kind, violations: List[str], default=None):
    """Fetch ``section[key]`` coerced to ``kind``, recording a violation instead of raising."""
    if key not in section:
        return default
    value = section[key]
    if kind is bool:
        if not isinstance(value, bool):
            violations.append(f"{name}.{key}: expected true/false, got {value!r}")
            return default
        return value
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        violations.append(f"{name}.{key}: expected an integer, got {value!r}")
        return default
    if kind is float and (isinstance(value, bool) or not isinstance(value, (int, float))):
        violations.append(f"{name}.{key}: expected a number, got {value!r}")
        return default
    if kind is str and not isinstance(value, str):
        violations.append(f"{name}.{key}: expected a string, got {value!r}")
        return default
    return kind(value)


def config_from_dict(data: Dict[str, Any], source: str = "") -> RunConfig:
    """
    Validate a parsed configuration.

    Raises:
        ConfigError: Listing every violation found.
    """
    violations: List[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["configuration must be a table of sections"])

    for name, section in data.items():
        if name not in _SECTIONS:
            violations.append(f"unknown section [{name}]")
        elif not isinstance(section, dict):
            violations.append(f"[{name}] must be a table")
        else:
            for key in section:
                if key not in _SECTIONS[name]:
                    violations.append(f"{name}.{key}: unknown key")

    def section(name: str) -> Dict[str, Any]:
        value = data.get(name, {})
        return value if isinstance(value, dict) else {}

    # units first: rates are converted before validation
    units = section("units")
    physical = _take(units, "units", "physical", bool, violations, False)
    rate_unit = _take(units, "units", "rate_unit", str, violations, "kappa")
    recorded_factor = _take(units, "units", "factor", float, violations, 1.0)

    sys_raw = dict(section("system"))
    mode = _take(sys_raw, "system", "mode", str, violations, "cavity3")
    if mode not in ("cavity3", "free_cmps"):
        violations.append(f"system.mode: must be 'cavity3' or 'free_cmps', got {mode!r}")
        mode = "cavity3"
    if mode == "cavity3":
        for key in ("kappa", "gamma"):
            if key not in sys_raw:
                violations.append(f"system.{key}: required for cavity3 (experimental rates are never guessed)")
    elif "D" not in sys_raw:
        violations.append("system.D: required for free_cmps")

    rates = {key: _take(sys_raw, "system", key, float, violations) for key in _RATE_KEYS}
    factor = 1.0
    if physical:
        kappa_phys = rates["kappa"]
        if kappa_phys is None or not kappa_phys > 0:
            violations.append("units.physical: system.kappa must be a positive physical rate")
        else:
            factor = kappa_phys
            rates = {k: (v / factor if v is not None else None) for k, v in rates.items()}
            logger.info(f"converted rates from {rate_unit} to kappa units (divided by {factor:g})")
    else:
        factor = recorded_factor

    system_kwargs: Dict[str, Any] = {"mode": mode}
    system_kwargs.update({k: v for k, v in rates.items() if v is not None})
    for key, kind in (("n_max", int), ("D", int), ("free_k", bool), ("log_scale", bool), ("auto_truncate", bool)):
        value = _take(sys_raw, "system", key, kind, violations)
        if value is not None:
            system_kwargs[key] = value
    system = SystemConfig(**system_kwargs)
    try:
        if mode == "cavity3":
            system.jc_params()
            if not system.s > 0:
                raise ValueError(f"s must be > 0, got {system.s}")
        system.space()
    except ValueError as exc:
        violations.append(f"system: {exc}")
    else:
        if mode == "cavity3" and system.auto_truncate:
            try:
                n_max = converged_params(system.jc_params()).n_max
                system = replace(system, n_max=n_max)
            except CavityFieldError as exc:
                violations.append(f"system.auto_truncate: {exc}")

    model = section("model")
    v_list: List[float] = []
    if "v_list" in model:
        raw = model["v_list"]
        if not isinstance(raw, list) or not raw:
            violations.append("model.v_list: must be a non-empty list of numbers")
        else:
            v_list = [float(v) for v in raw if isinstance(v, (int, float)) and not isinstance(v, bool)]
            if len(v_list) != len(raw):
                violations.append("model.v_list: every entry must be a number")
    v = _take(model, "model", "v", float, violations)
    if v is not None:
        v_list = [v] + [x for x in v_list if x != v]
    if not v_list and "v_list" not in model:
        violations.append("model: one of v or v_list is required")
    mu = _take(model, "model", "mu", float, violations, 1.0)
    rescale_mu = _take(model, "model", "rescale_mu", bool, violations, True)
    for x in v_list:
        try:
            LiebLinigerParams(x, mu)
        except ValueError as exc:
            violations.append(f"model: {exc} (LiebLinigerParams requires v > 0)")

    opt_raw = section("optimizer")
    opt_kwargs: Dict[str, Any] = {}
    for key, kind in (
        ("step", float), ("fd_delta", float), ("tol", float), ("max_iter", int),
        ("restarts", int), ("seed", int), ("jobs", int), ("grow", float),
    ):
        value = _take(opt_raw, "optimizer", key, kind, violations)
        if value is not None:
            opt_kwargs[key] = value
    if "bounds" in opt_raw:
        try:
            opt_kwargs["bounds"] = tuple((float(lo), float(hi)) for lo, hi in opt_raw["bounds"])
        except (TypeError, ValueError):
            violations.append("optimizer.bounds: expected a list of [lo, hi] pairs")
    optimizer = OptimizerConfig()
    try:
        optimizer = OptimizerConfig(**opt_kwargs)
    except ValueError as exc:
        violations.append(f"optimizer: {exc}")
    if optimizer.bounds is not None and len(optimizer.bounds) != system.space().size:
        violations.append(f"optimizer.bounds: {len(optimizer.bounds)} intervals for {system.space().size} parameters")
    warm_start = _take(opt_raw, "optimizer", "warm_start", bool, violations, True)
    compare_starts = _take(opt_raw, "optimizer", "compare_starts", bool, violations, False)

    noise = None
    if "noise" in data:
        noise_raw = section("noise")
        noise_kwargs: Dict[str, Any] = {}
        for key, kind in (("shots", int), ("seed", int), ("scheme", str), ("eps", float)):
            value = _take(noise_raw, "noise", key, kind, violations)
            if value is not None:
                noise_kwargs[key] = value
        noise = NoiseConfig(**noise_kwargs)
        try:
            noise.model()
            if not noise.eps > 0:
                raise ValueError(f"eps must be > 0, got {noise.eps}")
        except ValueError as exc:
            violations.append(f"noise: {exc}")

    corr = section("correlate")
    taus = _take(corr, "correlate", "taus", str, violations)
    if taus is not None:
        try:
            parse_taus(taus)
        except ValueError as exc:
            violations.append(f"correlate.taus: {exc}")
    kind = _take(corr, "correlate", "kind", str, violations, "g2")
    if kind not in CORRELATOR_KINDS:
        violations.append(f"correlate.kind: must be one of {CORRELATOR_KINDS}, got {kind!r}")

    out = section("output")
    output_dir = _take(out, "output", "dir", str, violations, get_settings().out_dir)
    output_format = _take(out, "output", "format", str, violations)
    if output_format is not None and output_format not in OUTPUT_FORMATS:
        violations.append(f"output.format: must be one of {OUTPUT_FORMATS}, got {output_format!r}")

    if violations:
        raise ConfigError(violations)

    return RunConfig(
        system=system,
        v_list=tuple(v_list),
        mu=mu,
        rescale_mu=rescale_mu,
        optimizer=optimizer,
        warm_start=warm_start,
        compare_starts=compare_starts,
        noise=noise,
        taus=taus,
        kind=kind,
        output_dir=output_dir,
        output_format=output_format,
        unit_factor=factor,
        rate_unit=rate_unit,
        source=source,
    )


def load_config(path: Union[str, Path]) -> RunConfig:
    """
    Read, convert and validate a run configuration file.

    Args:
        path: TOML (or JSON) file.

    Returns:
        RunConfig: With every default filled in.

    Raises:
        ConfigError: Unreadable file, syntax error or invariant violations.
    """
    path = Path(path)
    try:
        data = _read(path)
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError([f"cannot parse {path}: {exc}"]) from exc
    return config_from_dict(data, source=str(path))
