from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
import os

from dotenv import load_dotenv


# Load environment variables from .env file
env_path = Path(__file__).resolve().parents[1] / ".env"  # Go up 2 levels
load_dotenv(env_path)

TRACE_MODES = ("none", "console", "otlp")


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}. Please fix it in your .env file.")


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"{name} must be a number, got {raw!r}. Please fix it in your .env file.")


@dataclass(frozen=True)
class Settings:
    """Runtime knobs shared by the numerical core and the CLI."""

    log_level: str = "INFO"
    jobs: int = 1
    out_dir: str = "results"
    trace: str = "none"
    otlp_endpoint: str = "http://localhost:4317"
    # evolve() thresholds on the vectorised dimension dim**2
    ode_max_dim2: int = 4096
    expm_max_dim2: int = 1024
    ode_rtol: float = 1e-10
    ode_atol: float = 1e-12
    # bordered steady-state solve falls back to SVD above this condition estimate
    cond_limit: float = 1e12

    @classmethod
    def from_env(cls) -> "Settings":
        trace = os.getenv("CAVITYFIELD_TRACE", "none").lower()
        if trace not in TRACE_MODES:
            raise ValueError(f"CAVITYFIELD_TRACE must be one of {TRACE_MODES}, got {trace!r}.")

        settings = cls(
            log_level=os.getenv("CAVITYFIELD_LOG_LEVEL", "INFO").upper(),
            jobs=_env_int("CAVITYFIELD_JOBS", 1),
            out_dir=os.getenv("CAVITYFIELD_OUT_DIR", "results"),
            trace=trace,
            otlp_endpoint=os.getenv("CAVITYFIELD_OTLP_ENDPOINT", "http://localhost:4317"),
            ode_max_dim2=_env_int("CAVITYFIELD_ODE_MAX_DIM2", 4096),
            expm_max_dim2=_env_int("CAVITYFIELD_EXPM_MAX_DIM2", 1024),
            ode_rtol=_env_float("CAVITYFIELD_ODE_RTOL", 1e-10),
            ode_atol=_env_float("CAVITYFIELD_ODE_ATOL", 1e-12),
            cond_limit=_env_float("CAVITYFIELD_COND_LIMIT", 1e12),
        )
        if settings.jobs < 1:
            raise ValueError("CAVITYFIELD_JOBS must be >= 1")
        if settings.ode_rtol <= 0 or settings.ode_atol <= 0:
            raise ValueError("CAVITYFIELD_ODE_RTOL and CAVITYFIELD_ODE_ATOL must be positive")
        return settings


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings.from_env()
