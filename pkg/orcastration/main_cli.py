#!/usr/bin/env python3
"""
Cavity-Field Simulator - Command Line Interface

Runs the variational simulation of a continuum Bose gas by the output field
of a driven atom-cavity system and writes plot-ready data.

Subcommands:
    steady          stationary state diagnostics of the configured system
    optimize        minimise the energy density at one interaction strength
    sweep           minimise over a list of interaction strengths
    correlate       g1 or g2 series of the optimised state
    check-coop      cooperativity / feasibility report
    noisy-optimize  minimise the shot-noise-limited energy estimate

Exit status: 0 success, 1 usage or configuration error, 2 numerical failure
(diagnostics on standard error).
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from config import __version__
from config.run_config import NoiseConfig, RunConfig, load_config, parse_taus
from config.settings import get_settings
from config.tracing import setup_tracing, shutdown_tracing
from tools.optimizer import OptResult, VariationalSpace, minimize, minimize_via_unit, sweep
from utilities.algebra import spectral_gap
from utilities.cavity import atom_excitation, cooperativity, photon_number_distribution
from utilities.cmps import CmpsRep, CorrelationSeries, g1, g2, observables, stationary
from utilities.errors import CavityFieldError, ConfigError, DegenerateSpectrumError
from utilities.measure import noisy_minimize
from utilities.model import LiebLinigerParams, lieb_liniger_gamma
from utilities.save_pdf import save_pdf

logger = logging.getLogger(__name__)

DEFAULT_TAUS = "0:0.1:10"


class UsageError(Exception):
    """Bad command line."""


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ============================================================================
# OUTPUT HELPERS
# ============================================================================
def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _metadata(cfg: RunConfig) -> Dict[str, Any]:
    return {"config": cfg.resolved(), "version": __version__}


def write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def write_series_csv(path: Path, series: CorrelationSeries, normalized: Sequence[float], cfg: RunConfig) -> Path:
    """CSV with ``# config:``/``# version:`` comment lines, then tau,re,im,normalized."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# config: {json.dumps(cfg.resolved(), separators=(',', ':'))}\n")
        f.write(f"# version: {__version__}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["tau", "re", "im", "normalized"])
        for tau, value, norm in zip(series.taus, series.values, normalized):
            writer.writerow([_fmt(tau), _fmt(value.real), _fmt(value.imag), _fmt(norm)])
    return path


def write_trace_csv(path: Path, result: OptResult) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["iteration", "f", "accepted", "step", "stderr"])
        for entry in result.trace:
            writer.writerow([entry.iteration, _fmt(entry.f), int(entry.accepted), _fmt(entry.step), _fmt(entry.stderr)])
    return path


def _safe_normalized(series: CorrelationSeries, n: float) -> np.ndarray:
    if n > 0:
        return series.normalized(n).real
    return np.full(series.taus.size, np.nan)


def summarize(space: VariationalSpace, v: float, mu: float, result: OptResult) -> Dict[str, Any]:
    """One entry of the summary schema."""
    entry: Dict[str, Any] = {"v": v, **result.to_dict()}
    entry["breakdown"] = (
        {k: result.breakdown.to_dict()[k] for k in ("T", "W", "N")} if result.breakdown is not None else None
    )
    entry["g2_0_normalized"] = None
    entry["gamma_ll"] = None
    if result.error is None:
        entry["parameters"] = space.describe(result.lambda_star)
        obs = observables(space.build(result.lambda_star))
        if obs.n > 0:
            entry["g2_0_normalized"] = obs.G2_0 / obs.n**2
            entry["gamma_ll"] = lieb_liniger_gamma(obs, LiebLinigerParams(v, mu))
    return entry


# ============================================================================
# COMMANDS
# ============================================================================
def cmd_steady(cfg: RunConfig, args) -> int:
    space = cfg.system.space()
    rep = space.build(cfg.system.lambda0(cfg.optimizer.seed))
    rho = stationary(rep)
    obs = observables(rep)
    try:
        gap: Optional[float] = spectral_gap(rep.lab_liouvillian)
    except DegenerateSpectrumError:
        gap = None

    results: Dict[str, Any] = {
        "trace": rho.trace,
        "residual": rho.residual,
        "method": rho.method,
        "asymmetry": rho.asymmetry,
        "min_eigenvalue": rho.min_eigenvalue(),
        "populations": rho.populations().tolist(),
        "observables": {"n": obs.n, "T": obs.T, "G2_0": obs.G2_0},
        "spectral_gap": gap,
    }
    if cfg.system.mode == "cavity3":
        p = cfg.system.jc_params()
        results["photon_distribution"] = photon_number_distribution(p, rho.matrix).tolist()
        results["atom_excitation"] = atom_excitation(p, rho.matrix)
        results["cavity_photons"] = obs.n * rep.s / p.kappa

    path = write_json(Path(cfg.output_dir) / "steady.json", {**_metadata(cfg), "results": results})
    print(f"✅ Steady state (residual {rho.residual:.2e}) written to: {path}")
    return 0


def _minimizer(cfg: RunConfig):
    return minimize_via_unit if cfg.rescale_mu else minimize


def cmd_optimize(cfg: RunConfig, args) -> int:
    space = cfg.system.space()
    p = cfg.model
    result = _minimizer(cfg)(space, cfg.system.lambda0(cfg.optimizer.seed), p, cfg.optimizer)
    out = Path(cfg.output_dir)
    write_trace_csv(out / "optimize_trace.csv", result)
    path = write_json(out / "optimize.json", {**_metadata(cfg), "results": [summarize(space, p.v, p.mu, result)]})
    status = "✅" if result.converged else "❌"
    print(f"{status} f* = {result.f_star:.10g} ({result.message}); summary written to: {path}")
    return 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    space = cfg.system.space()
    results = sweep(
        space,
        cfg.v_list,
        cfg.mu,
        cfg.system.lambda0(cfg.optimizer.seed),
        cfg.optimizer,
        warm_start=cfg.warm_start,
        jobs=cfg.optimizer.jobs,
        compare_starts=cfg.compare_starts,
        rescale_mu=cfg.rescale_mu,
    )
    out = Path(cfg.output_dir)
    taus = parse_taus(cfg.taus or DEFAULT_TAUS)
    entries = []
    failures = []
    for v, result in zip(cfg.v_list, results):
        entries.append(summarize(space, v, cfg.mu, result))
        if result.error is not None:
            failures.append(f"v = {v:g}: {result.error}")
            print(f"❌ v = {v:g} failed: {result.error}", file=sys.stderr)
            continue
        rep = space.build(result.lambda_star)
        series = g2(rep, taus)
        write_series_csv(out / f"g2_v{v:g}.csv", series, _safe_normalized(series, observables(rep).n), cfg)
        print(f"✅ v = {v:g}: f* = {result.f_star:.10g}, converged = {result.converged}")

    path = write_json(out / "summary.json", {**_metadata(cfg), "results": entries})
    print(f"✅ Sweep summary written to: {path}")

    if args.pdf:
        headers = ["v", "f*", "g2(0)/n^2", "v/n", "iterations", "converged"]
        rows = [
            [
                f"{e['v']:g}",
                f"{e['f_star']:.6g}",
                "-" if e["g2_0_normalized"] is None else f"{e['g2_0_normalized']:.4f}",
                "-" if e["gamma_ll"] is None else f"{e['gamma_ll']:.4g}",
                e["iterations"],
                "yes" if e["converged"] else "no",
            ]
            for e in entries
        ]
        notes = [f"mode: {cfg.system.mode}, mu = {cfg.mu:g}", f"version: {__version__}"]
        pdf_path = save_pdf(headers, rows, notes=notes, failures=failures, output_dir=str(out))
        print(f"✅ PDF summary written to: {pdf_path}")
    return 2 if failures else 0


def cmd_correlate(cfg: RunConfig, args) -> int:
    space = cfg.system.space()
    lam = cfg.system.lambda0(cfg.optimizer.seed)
    if not args.no_optimize:
        result = _minimizer(cfg)(space, lam, cfg.model, cfg.optimizer)
        lam = result.lambda_star
    rep: CmpsRep = space.build(lam)
    taus = parse_taus(cfg.taus or DEFAULT_TAUS)
    series = g1(rep, taus) if cfg.kind == "g1" else g2(rep, taus)
    normalized = _safe_normalized(series, observables(rep).n)

    out = Path(cfg.output_dir)
    if (cfg.output_format or "csv") == "csv":
        path = write_series_csv(out / f"{cfg.kind}.csv", series, normalized, cfg)
    else:
        payload = {
            **_metadata(cfg),
            "kind": cfg.kind,
            "lambda": lam.tolist(),
            "taus": series.taus.tolist(),
            "re": series.values.real.tolist(),
            "im": series.values.imag.tolist(),
            "normalized": [None if np.isnan(x) else float(x) for x in normalized],
        }
        path = write_json(out / f"{cfg.kind}.json", payload)
    print(f"✅ {cfg.kind} series ({series.taus.size} points) written to: {path}")
    return 0


def cmd_check_coop(cfg: RunConfig, args) -> int:
    g = args.g if args.g is not None else cfg.system.g
    kappa = args.kappa if args.kappa is not None else cfg.system.kappa
    gamma = args.gamma if args.gamma is not None else cfg.system.gamma
    report = cooperativity(g, kappa, gamma)
    results = {
        "g": g,
        "kappa": kappa,
        "gamma": gamma,
        "C": None if np.isinf(report.C) else report.C,
        "tau": None if np.isinf(report.tau) else report.tau,
        "coherence_time": None if np.isinf(report.coherence_time) else report.coherence_time,
        "feasible": report.feasible,
        "strong_coupling": report.strong_coupling,
    }
    path = write_json(Path(cfg.output_dir) / "coop.json", {**_metadata(cfg), "results": results})
    status = "✅" if report.feasible else "❌"
    print(f"{status} C = {report.C:.4g}, tau = {report.tau:.4g}, coherence time = {report.coherence_time:.4g}")
    print(f"   report written to: {path}")
    return 0


def cmd_noisy_optimize(cfg: RunConfig, args) -> int:
    noise = cfg.noise or NoiseConfig()
    if args.shots is not None:
        noise = replace(noise, shots=args.shots)
        cfg = replace(cfg, noise=noise)
    space = cfg.system.space()
    p = cfg.model
    result = noisy_minimize(space, cfg.system.lambda0(cfg.optimizer.seed), p, cfg.optimizer, noise.model(), eps=noise.eps)

    out = Path(cfg.output_dir)
    write_trace_csv(out / "noisy_trace.csv", result)
    entry = summarize(space, p.v, p.mu, result)
    entry["f_exact"] = result.breakdown.f if result.breakdown is not None else None
    entry["stderr"] = result.trace[-1].stderr if result.trace else None
    path = write_json(out / "noisy_optimize.json", {**_metadata(cfg), "results": [entry]})
    status = "✅" if result.converged else "❌"
    print(f"{status} noisy f* = {result.f_star:.8g} ({noise.shots} shots); summary written to: {path}")
    return 0


COMMANDS = {
    "steady": cmd_steady,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "correlate": cmd_correlate,
    "check-coop": cmd_check_coop,
    "noisy-optimize": cmd_noisy_optimize,
}


# ============================================================================
# ENTRY POINT
# ============================================================================
def build_parser() -> CliParser:
    common = CliParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML or JSON run configuration")
    common.add_argument("--v", type=float, help="interaction strength (overrides the config)")
    common.add_argument("--taus", help="time grid START:STEP:END in units of 1/kappa")
    common.add_argument("--jobs", type=int, help="worker threads")
    common.add_argument("--seed", type=int, help="seed for restarts and noise")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), help="output format (correlate defaults to csv)")
    common.add_argument(
        "--direct-mu", action="store_true", help="optimise at the configured mu instead of rescaling from mu = 1"
    )

    parser = CliParser(prog="cavityfield", description="Cavity-field cMPS simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("steady", parents=[common], help="stationary state diagnostics")
    sub.add_parser("optimize", parents=[common], help="minimise at one v")
    sweep_parser = sub.add_parser("sweep", parents=[common], help="minimise over v_list")
    sweep_parser.add_argument("--pdf", action="store_true", help="also write summary.pdf")
    sweep_parser.add_argument("--cold", action="store_true", help="cold-start every entry")
    corr = sub.add_parser("correlate", parents=[common], help="correlation series")
    corr.add_argument("--kind", choices=("g1", "g2"), help="correlator (default from config, g2)")
    corr.add_argument("--no-optimize", action="store_true", help="use the configured parameters as they are")
    coop = sub.add_parser("check-coop", parents=[common], help="cooperativity report")
    coop.add_argument("--g", type=float)
    coop.add_argument("--kappa", type=float)
    coop.add_argument("--gamma", type=float)
    noisy = sub.add_parser("noisy-optimize", parents=[common], help="minimise the measured energy")
    noisy.add_argument("--shots", type=int)
    return parser


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    """Fold command-line flags into the loaded configuration."""
    changes: Dict[str, Any] = {}
    violations: List[str] = []
    if args.v is not None:
        if not args.v > 0:
            violations.append(f"--v: v must be > 0, got {args.v}")
        changes["v_list"] = (args.v,)
    if args.taus is not None:
        try:
            parse_taus(args.taus)
        except ValueError as exc:
            violations.append(f"--taus: {exc}")
        changes["taus"] = args.taus
    optimizer = cfg.optimizer
    if args.jobs is not None:
        if args.jobs < 1:
            violations.append(f"--jobs: must be >= 1, got {args.jobs}")
        else:
            optimizer = replace(optimizer, jobs=args.jobs)
    if args.seed is not None:
        optimizer = replace(optimizer, seed=args.seed)
        if cfg.noise is not None:
            changes["noise"] = replace(cfg.noise, seed=args.seed)
    changes["optimizer"] = optimizer
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.format is not None:
        changes["output_format"] = args.format
    if getattr(args, "kind", None) is not None:
        changes["kind"] = args.kind
    if getattr(args, "cold", False):
        changes["warm_start"] = False
    if getattr(args, "direct_mu", False):
        changes["rescale_mu"] = False
    if violations:
        raise ConfigError(violations)
    return replace(cfg, **changes)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Execute one subcommand and return its exit status."""
    settings = get_settings()
    logging.basicConfig(
        level=getattr(logging, settings.log_level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config) if args.config is not None else RunConfig()
        if args.config is None:
            logger.info("no --config given, using defaults")
        cfg = apply_overrides(cfg, args)
    except UsageError as exc:
        print(f"❌ usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return 1

    setup_tracing(settings)
    try:
        return COMMANDS[args.command](cfg, args)
    except CavityFieldError as exc:
        print(f"❌ numerical failure in {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        for name in ("residual", "lam", "component", "sequence", "t_reached", "tail_estimate"):
            if getattr(exc, name, None) is not None:
                print(f"   {name}: {getattr(exc, name)}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"❌ cannot write output: {exc}", file=sys.stderr)
        return 2
    finally:
        shutdown_tracing()


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
