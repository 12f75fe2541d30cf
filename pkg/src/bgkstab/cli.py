"""Command-line driver: configuration, end-to-end pipeline and parameter sweeps.

Configuration files are INI-style (``key = value`` under ``[section]``
headers). Every section and key is optional, but unknown ones are rejected.
See ``CONFIG_SCHEMA`` for the accepted keys and README.md for an example.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dispersion, functional, orbit, profile, sturm, wave
from .io import _jsonable, write_csv, write_json
from .numerics import QuadratureError

log = logging.getLogger("bgkstab")

WORKERS_ENV = "BGKSTAB_WORKERS"
EXIT_OK, EXIT_NO_WAVE, EXIT_NUMERIC, EXIT_CONFIG = 0, 2, 3, 4


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclasses.dataclass(frozen=True)
class ProfileConfig:
    family: str = "bump"
    theta: float = 1.0
    kappa: float = 8.0
    m: int = 2
    e_min: float = profile.DEFAULT_E_FLOOR
    decay_exponent: float = 2.0
    normalize: bool = True


@dataclasses.dataclass(frozen=True)
class WaveConfig:
    kind: str = "bgk"
    phi_plus_offset: float = 0.05
    period: float = 0.0
    grid_n: int = 4096
    steps_per_period: int = wave.STEPS_PER_PERIOD
    max_periods: float = 50.0


@dataclasses.dataclass(frozen=True)
class SpectralConfig:
    k: int = 2
    lambda1_tol: float = 0.0


@dataclasses.dataclass(frozen=True)
class FunctionalConfig:
    rel_tol: float = functional.OUTER_REL_TOL
    free_weight: float = 1.0
    separatrix_rel: float = orbit.SEPARATRIX_REL


@dataclasses.dataclass(frozen=True)
class DispersionConfig:
    lambda_min: float = 0.0
    lambda_max: float = 0.0
    n_lambda: int = 24
    n_x: int = dispersion.DEFAULT_NX
    n_v: int = dispersion.DEFAULT_NV
    samples: int = dispersion.DEFAULT_SAMPLES
    galerkin: bool = False
    galerkin_size: int = 16
    always: bool = False


@dataclasses.dataclass(frozen=True)
class OutputConfig:
    directory: str = "bgkstab-out"
    formats: tuple = ("json", "csv")
    verbosity: str = "info"


@dataclasses.dataclass(frozen=True)
class SweepConfig:
    theta: tuple = (1.0,)
    kappa: tuple = (0.0, 8.0)
    amp: tuple = (0.01, 0.05)


@dataclasses.dataclass(frozen=True)
class RunConfig:
    profile: ProfileConfig = ProfileConfig()
    wave: WaveConfig = WaveConfig()
    spectral: SpectralConfig = SpectralConfig()
    functional: FunctionalConfig = FunctionalConfig()
    dispersion: DispersionConfig = DispersionConfig()
    output: OutputConfig = OutputConfig()
    sweep: SweepConfig = SweepConfig()


CONFIG_SCHEMA = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_SECTIONS = {
    "profile": ProfileConfig, "wave": WaveConfig, "spectral": SpectralConfig,
    "functional": FunctionalConfig, "dispersion": DispersionConfig, "output": OutputConfig,
    "sweep": SweepConfig,
}


def _convert(cls, key, raw):
    default = getattr(cls(), key)
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(raw)
            return low in ("true", "yes", "1", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            return tuple(float(s) for s in items) if default and isinstance(default[0], float) else tuple(items)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"[{cls.__name__}] {key}: cannot parse {raw!r}") from exc


def parse_config(text):
    """RunConfig from INI text; unknown sections or keys raise ConfigError."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    parts = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        cls = _SECTIONS[section]
        names = {f.name for f in dataclasses.fields(cls)}
        values = {}
        for key, raw in parser.items(section):
            if key not in names:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key] = _convert(cls, key, raw)
        parts[section] = cls(**values)
    config = RunConfig(**parts)
    validate(config)
    return config


def load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return parse_config(text)


def validate(config):
    p, w, s, f, d, o = (config.profile, config.wave, config.spectral, config.functional,
                        config.dispersion, config.output)
    checks = [
        (p.family in ("maxwellian", "bump"), "profile.family must be maxwellian or bump"),
        (p.theta > 0, "profile.theta must be positive"),
        (p.kappa >= 0, "profile.kappa must be non-negative"),
        (p.m in (1, 2), "profile.m must be 1 or 2"),
        (p.decay_exponent > 1, "profile.decay_exponent must exceed 1"),
        (w.kind in ("bgk", "uniform"), "wave.kind must be bgk or uniform"),
        (w.grid_n >= 64 and w.grid_n % 4 == 0, "wave.grid_n must be a multiple of 4 and >= 64"),
        (w.phi_plus_offset > 0, "wave.phi_plus_offset must be positive"),
        (w.kind != "uniform" or w.period > 0, "wave.period must be positive for a uniform wave"),
        (w.steps_per_period >= 64, "wave.steps_per_period must be >= 64"),
        (w.max_periods > 0, "wave.max_periods must be positive"),
        (s.k >= 2, "spectral.k must be >= 2"),
        (s.lambda1_tol >= 0, "spectral.lambda1_tol must be non-negative (0 selects the default)"),
        (f.rel_tol > 0, "functional.rel_tol must be positive"),
        (f.free_weight in (1.0, 2.0), "functional.free_weight must be 1 or 2"),
        (0 < f.separatrix_rel < 1e-2, "functional.separatrix_rel must lie in (0, 0.01)"),
        (d.lambda_min >= 0 and d.lambda_max >= 0, "dispersion scan limits must be non-negative"),
        ((d.lambda_min == 0 and d.lambda_max == 0) or 0 < d.lambda_min < d.lambda_max,
         "dispersion scan range must satisfy 0 < lambda_min < lambda_max"),
        (d.n_lambda >= 3, "dispersion.n_lambda must be >= 3"),
        (d.n_x >= 8 and w.grid_n % d.n_x == 0, "dispersion.n_x must be >= 8 and divide wave.grid_n"),
        (d.n_v >= 65 and d.n_v % 2 == 1, "dispersion.n_v must be odd and >= 65"),
        (d.samples >= 16, "dispersion.samples must be >= 16"),
        (d.galerkin_size >= 2 and d.galerkin_size % 2 == 0, "dispersion.galerkin_size must be even"),
        (set(o.formats) <= {"json", "csv"} and o.formats, "output.formats must list json and/or csv"),
        (o.verbosity in ("quiet", "info", "debug"), "output.verbosity must be quiet, info or debug"),
        (all(t > 0 for t in config.sweep.theta), "sweep.theta values must be positive"),
        (all(k >= 0 for k in config.sweep.kappa), "sweep.kappa values must be non-negative"),
        (all(a > 0 for a in config.sweep.amp), "sweep.amp values must be positive"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)
    return config


def build_profile(pc):
    return profile.make_profile(pc.family, pc.theta, pc.kappa, pc.m, e_min=pc.e_min,
                                decay_exponent=pc.decay_exponent, normalize_=pc.normalize)


def build_wave(config):
    prof = build_profile(config.profile)
    w = config.wave
    if w.kind == "uniform":
        return wave.uniform_wave(prof, w.period, w.grid_n)
    phi_star = wave.find_equilibrium_level(prof)
    return wave.construct_wave(prof, phi_star + w.phi_plus_offset, w.grid_n,
                               steps_per_period=w.steps_per_period, max_periods=w.max_periods)


def _wants(config, fmt):
    return fmt in config.output.formats


def run_pipeline(config, stages="growth", out_dir=None):
    """Run profile -> wave -> spectrum -> criterion -> functional -> dispersion.

    ``stages`` stops the chain early ("construct", "spectrum", "criterion",
    "functional"). Returns a summary dict; outputs go to ``out_dir``.
    """
    order = ["construct", "spectrum", "criterion", "functional", "growth"]
    out = Path(out_dir or config.output.directory)
    saved = orbit.SEPARATRIX_REL
    orbit.SEPARATRIX_REL = config.functional.separatrix_rel
    try:
        return _run_stages(config, order.index(stages), out)
    finally:
        orbit.SEPARATRIX_REL = saved


def _run_stages(config, last, out):
    w = build_wave(config)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"period": w.period, "phi_minus": w.phi_minus, "phi_plus": w.phi_plus,
               "phi_star": w.phi_star, "max_q": float(np.max(w.q))}
    if _wants(config, "csv"):
        wave.export_wave_csv(w, out / "wave.csv")
    log.info("wave: P = %.10g, phi_- = %.6g, phi_+ = %.6g", w.period, w.phi_minus, w.phi_plus)
    if last < 1:
        return summary

    spec = sturm.solve_eigen(w.q, w.period, config.spectral.k)
    if config.wave.kind == "bgk":
        tol = config.spectral.lambda1_tol or None
        sturm.ground_state(w, spec, tol)
    summary["eigenvalues"] = [float(x) for x in spec.eigenvalues]
    if _wants(config, "csv"):
        sturm.export_spectrum_csv(spec, out / "spectrum.csv", out / "eigenfunctions.csv")
    log.info("spectrum: %s", ", ".join(f"{x:.6g}" for x in spec.eigenvalues))
    if last < 2:
        return summary

    report = functional.criterion(w, spec)
    summary.update(verdict=report.verdict.value, criterion_integral=report.criterion_integral,
                   criterion_error_bound=report.error_bound)
    if _wants(config, "json"):
        write_json(out / "criterion.json", report.to_dict())
    log.info("criterion: %.6e (bound %.2e) -> %s", report.criterion_integral, report.error_bound,
             report.verdict.value)
    if last < 3:
        return summary

    psi = functional.test_function(spec.eigenfunctions[0], w.h)
    breakdown = functional.lin_functional(w, psi, free_weight=config.functional.free_weight,
                                          rel_tol=config.functional.rel_tol)
    summary.update(functional_total=breakdown.total, functional_error_budget=breakdown.error_budget)
    if _wants(config, "json"):
        write_json(out / "functional.json", breakdown.to_dict())
    log.info("functional: total %.6e (budget %.2e)", breakdown.total, breakdown.error_budget)
    if last < 4:
        return summary

    d = config.dispersion
    unstable = report.verdict is functional.Verdict.UNSTABLE
    if unstable or d.always:
        x = dispersion.mode_positions(w, d.n_x)
        v = dispersion.velocity_grid(w, d.n_v, psi)
        orbits = dispersion.trace_mode_orbits(w, x, v, d.samples)
        hint = (d.lambda_min, d.lambda_max) if d.lambda_max > 0 else None
        scan = dispersion.find_growth_rate(w, psi, hint, n_lambda=d.n_lambda, orbits=orbits,
                                           galerkin=d.galerkin, galerkin_size=d.galerkin_size)
        payload = scan.to_dict()
        payload["status"] = "root found" if scan.root is not None else "no sign change"
        if scan.root is not None and _wants(config, "csv"):
            mode = dispersion.assemble_mode(w, psi, scan.root, orbits=orbits)
            payload.update(transport_residual=mode.transport_residual,
                           poisson_residual=mode.poisson_residual, excluded_cells=mode.excluded_cells)
            dispersion.export_mode_csv(mode, out / "mode.csv")
    else:
        payload = {"lambdas": [], "h_values": [], "bracket": None, "root": None,
                   "caveat": dispersion.ROOT_CAVEAT, "galerkin_root": None,
                   "status": "not run: criterion verdict is Inconclusive"}
    summary["growth_rate"] = payload["root"]
    if _wants(config, "json"):
        write_json(out / "scan.json", payload)
    log.info("dispersion: %s", payload["status"])
    return summary


SWEEP_HEADER = ["theta", "kappa", "amp", "P_phi", "lambda0", "criterion_integral", "verdict"]


def _sweep_row(args):
    config, theta, kappa, amp = args
    pc = dataclasses.replace(config.profile, theta=theta, kappa=kappa)
    wc = dataclasses.replace(config.wave, phi_plus_offset=amp, kind="bgk")
    cfg = dataclasses.replace(config, profile=pc, wave=wc)
    try:
        w = build_wave(cfg)
        report = functional.criterion(w)
        return [theta, kappa, amp, w.period, report.lambda0, report.criterion_integral, report.verdict.value]
    except Exception as exc:  # per-row isolation: record the class, keep sweeping
        return [theta, kappa, amp, "nan", "nan", "nan", type(exc).__name__]


def scan_family(config, sweep=None, workers=None):
    """Criterion for every (theta, kappa, amp) triple; rows in sweep order."""
    sweep = sweep or config.sweep
    jobs = [(config, t, k, a) for t in sweep.theta for k in sweep.kappa for a in sweep.amp]
    workers = workers or int(os.environ.get(WORKERS_ENV, "1") or 1)
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_row, jobs))
    return [_sweep_row(j) for j in jobs]


def write_sweep(rows, path):
    cols = [[r[i] for r in rows] for i in range(len(SWEEP_HEADER))]
    write_csv(path, SWEEP_HEADER, cols)


def exit_code_for(exc):
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (wave.NonOscillatory, wave.AmplitudeTooLarge, wave.EventNotFound, wave.NoSignChange)):
        return EXIT_NO_WAVE
    if isinstance(exc, (functional.IdentityViolation, QuadratureError, sturm.SpectralOrderViolation,
                        sturm.DiscretizationError, FloatingPointError, orbit.OrbitDomainError,
                        profile.ProfileDomainError, RuntimeError, ValueError)):
        return EXIT_NUMERIC
    return None


def build_parser():
    parser = argparse.ArgumentParser(prog="bgkstab",
                                     description="Linear instability analysis of periodic BGK waves.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [("construct", "build the wave and write wave.csv"),
                       ("spectrum", "also solve the Sturm-Liouville problem"),
                       ("criterion", "also evaluate the ground-state criterion"),
                       ("functional", "also evaluate the orbit-averaged quadratic form"),
                       ("growth", "full pipeline including the growth-rate scan"),
                       ("sweep", "criterion table over the [sweep] parameter grid")]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="INI configuration file")
        p.add_argument("--out", type=Path, help="output directory (overrides [output] directory)")
        p.add_argument("--grid-n", type=int, help="override [wave] grid_n")
        p.add_argument("--quiet", action="store_true", help="only report errors")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else validate(RunConfig())
        if args.grid_n is not None:
            config = validate(dataclasses.replace(config, wave=dataclasses.replace(config.wave, grid_n=args.grid_n)))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    level = logging.WARNING if args.quiet or config.output.verbosity == "quiet" else (
        logging.DEBUG if config.output.verbosity == "debug" else logging.INFO)
    logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr)
    out = args.out or Path(config.output.directory)
    try:
        if args.command == "sweep":
            rows = scan_family(config)
            out.mkdir(parents=True, exist_ok=True)
            write_sweep(rows, out / "sweep.csv")
            summary = {"rows": len(rows), "verdicts": sorted({r[-1] for r in rows})}
        else:
            summary = run_pipeline(config, args.command, out)
    except Exception as exc:
        code = exit_code_for(exc)
        if code is None:
            raise
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    if not args.quiet:
        write_json_stdout(summary)
    return EXIT_OK


def write_json_stdout(payload):
    print(json.dumps(_jsonable(payload), indent=2))


if __name__ == "__main__":
    sys.exit(main())
