"""Experiment runner: linear solves, nonlinear fixed points, decomposition
tests, and accuracy/support scaling sweeps, driven by flat key=value config
files.  Emits deterministic CSV series and a plain-text report."""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import operators, oracle
from .coeffs import axpy
from .counting import Counters
from .fixpt import (CertificationError, NonlinearSpec, apply_nonlinear,
                    check_contraction, fixpt as run_fixpt)
from .frame import analyze, decompose, load_frame_file
from .operators import OperatorSpec
from .solve import SolveConfig, solve as run_solve

__all__ = ["ExperimentConfig", "parse_config", "run", "fit_scaling", "main"]

PROBLEMS = ("poisson1d", "convdiff1d", "quadratic1d", "lshape2d_linear")

_DEFAULTS = {
    "theta": "0.3",
    "k_inner": "auto",
    "shrink": "0.25",
    "epsilon_target": "1e-3",
    "sweep": "",
    "strength": "1.0",
    "forcing_scale": "1.0",
    "log_residual": "true",
    "output": ".",
}

_REQUIRED = ("problem", "frame")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    problem: str
    frame_path: str
    theta: float
    k_inner: int | None
    shrink: float
    epsilon_target: float
    sweep: list
    strength: float
    forcing_scale: float
    log_residual: bool
    output: str
    seed: int = 42


def parse_config(path) -> ExperimentConfig:
    """Read 'key = value' lines; '#' starts a comment."""
    raw = dict(_DEFAULTS)
    seen = set()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    for ln, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {ln}: expected 'key = value'")
        key, _, value = body.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _DEFAULTS and key not in _REQUIRED and key != "seed":
            raise ConfigError(f"line {ln}: unknown key {key!r}")
        raw[key] = value
        seen.add(key)
    for key in _REQUIRED:
        if key not in seen:
            raise ConfigError(f"missing required key {key!r}")

    def _float(key):
        try:
            val = float(raw[key])
        except ValueError:
            raise ConfigError(f"key {key!r}: not a number: {raw[key]!r}") from None
        if key in ("theta", "epsilon_target", "forcing_scale") and val <= 0:
            raise ConfigError(f"key {key!r} must be positive")
        return val

    problem = raw["problem"]
    if problem not in PROBLEMS:
        raise ConfigError(f"key 'problem': unknown problem {problem!r}")
    theta = _float("theta")
    if not theta < 1.0 / 3.0:
        raise ConfigError("key 'theta' must be < 1/3")
    k_inner = None
    if raw["k_inner"] != "auto":
        try:
            k_inner = int(raw["k_inner"])
        except ValueError:
            raise ConfigError("key 'k_inner': expected integer or 'auto'") from None
    sweep = []
    if raw["sweep"]:
        try:
            sweep = [float(tok) for tok in raw["sweep"].split(",")]
        except ValueError:
            raise ConfigError("key 'sweep': expected comma-separated numbers") from None
        if any(e <= 0 for e in sweep):
            raise ConfigError("key 'sweep': tolerances must be positive")
        if any(a <= b for a, b in zip(sweep, sweep[1:])):
            raise ConfigError("key 'sweep': must be strictly decreasing")
    seed = int(os.environ.get("FRAMESOLVE_SEED", "42"))
    base = os.path.dirname(os.path.abspath(path))
    frame_path = raw["frame"]
    if not os.path.isabs(frame_path):
        frame_path = os.path.join(base, frame_path)
    output = raw["output"]
    if not os.path.isabs(output):
        output = os.path.join(base, output)
    raw["output"] = output
    return ExperimentConfig(
        problem=problem, frame_path=frame_path, theta=theta, k_inner=k_inner,
        shrink=_float("shrink"), epsilon_target=_float("epsilon_target"),
        sweep=sweep, strength=_float("strength"),
        forcing_scale=_float("forcing_scale"),
        log_residual=raw["log_residual"].lower() in ("true", "1", "yes"),
        output=raw["output"], seed=seed)


@dataclass
class Problem:
    spec: OperatorSpec
    forcing: object           # vectorized callable, 1 or 2 args
    nl: NonlinearSpec = field(default_factory=lambda: NonlinearSpec(0.0))


def build_problem(config: ExperimentConfig, frame) -> Problem:
    scale = config.forcing_scale
    if config.problem == "poisson1d":
        spec = OperatorSpec(diffusion=1.0)
        return Problem(spec, lambda x: 2.0 * scale * np.ones_like(x))
    if config.problem == "convdiff1d":
        # manufactured from u = scale*x*(1-x): -u'' + u' + u
        spec = OperatorSpec(diffusion=1.0, convection=1.0, reaction=1.0)
        return Problem(spec, lambda x: scale * (2.0 + (1.0 - 2.0 * x) + x * (1.0 - x)))
    if config.problem == "quadratic1d":
        # manufactured from u = scale*sin(pi x): -16 u'' + strength*u^2;
        # the large diffusion keeps the certification constant gamma below 1
        diff = 16.0
        spec = OperatorSpec(diffusion=diff)
        s = config.strength

        def forcing(x):
            return (diff * scale * math.pi ** 2 * np.sin(math.pi * x)
                    + s * (scale * np.sin(math.pi * x)) ** 2)

        return Problem(spec, forcing, NonlinearSpec(s))
    # lshape2d_linear: diffusion scaled so the matrix norm stays below 2
    spec = OperatorSpec(diffusion=0.0625)

    def forcing2(x, y):
        return scale * np.ones(np.broadcast_shapes(np.shape(x), np.shape(y)))

    return Problem(spec, forcing2, NonlinearSpec(0.0))


def _report_text(config, spectral, cert, extra_lines=()):
    lines = [
        f"problem = {config.problem}",
        f"frame = {config.frame_path}",
        f"lambda_max = {spectral.lambda_max!r}",
        f"lambda_min = {spectral.lambda_min!r}",
        f"alpha_star = {spectral.alpha_star!r}",
        f"rho = {spectral.rho!r}",
        f"gamma = {cert.gamma!r}",
        f"L = {cert.lipschitz!r}",
        f"r_star = {cert.radius!r}",
        f"smallness = {'pass' if cert.datum_norm < cert.bound else 'FAIL'}"
        f" (|l| = {cert.datum_norm!r}, bound = {cert.bound!r})",
    ]
    lines.extend(extra_lines)
    return "\n".join(lines) + "\n"


def _solve_once(frame, problem, config, spectral, epsilon, snapshot,
                counters=None):
    """One experiment at one tolerance; returns (vector, history, h1_error)."""
    f_vec = analyze(frame, problem.forcing)
    counters = counters if counters is not None else Counters()

    def factory(eps):
        if config.k_inner is not None:
            return SolveConfig(config.theta, config.k_inner, spectral, eps)
        return SolveConfig.from_spectrum(spectral, eps, theta=config.theta,
                                         shrink=config.shrink)

    if problem.nl.strength != 0.0:
        cert = check_contraction(frame, problem.spec, problem.nl, f_vec)
        v, hist_obj = run_fixpt(frame, problem.spec, problem.nl, f_vec,
                                cert.config(epsilon), factory,
                                counters=counters)
        image = apply_nonlinear(frame, problem.nl, v, 0.0)
        ref = oracle.least_squares_solve(snapshot, axpy(-1.0, image, f_vec))
    else:
        v, hist_obj = run_solve(
            frame, problem.spec, f_vec, factory(epsilon), counters=counters,
            residual_snapshot=snapshot if config.log_residual else None)
        ref = oracle.least_squares_solve(snapshot, f_vec)
    ws = frame.workspace()
    err = ws.to_dense(v) - ws.to_dense(ref)
    h1 = float(np.sqrt(err @ ws.h1_gram() @ err))
    return v, hist_obj, h1, counters


def run(config: ExperimentConfig) -> int:
    """Execute the experiment; returns the process exit code."""
    frame = load_frame_file(config.frame_path)
    problem = build_problem(config, frame)
    spectral = operators.estimate_spectrum(frame, problem.spec)
    f_vec = analyze(frame, problem.forcing)
    snapshot = oracle.assemble(frame, problem.spec, f_vec)
    try:
        cert = check_contraction(frame, problem.spec, problem.nl, f_vec)
    except CertificationError as exc:
        os.makedirs(config.output, exist_ok=True)
        report = (f"problem = {config.problem}\n"
                  f"certification = FAIL\n"
                  f"gamma = {exc.gamma!r}\nbound = {exc.bound!r}\n"
                  f"datum_norm = {exc.datum_norm!r}\n")
        _write(config.output, "report.txt", report)
        print("certification failed: " + str(exc), file=sys.stderr)
        return 2

    os.makedirs(config.output, exist_ok=True)
    v, hist, h1, _ = _solve_once(frame, problem, config, spectral,
                                 config.epsilon_target, snapshot)
    _write(config.output, "history.csv", hist.to_csv())

    extra = [f"epsilon_target = {config.epsilon_target!r}",
             f"final_support = {len(v)}",
             f"h1_error_vs_reference = {h1!r}"]
    if config.sweep:
        rows = ["epsilon,support,cost_units,h1_error"]
        for eps in config.sweep:
            counters = Counters()
            vv, _, h1e, counters = _solve_once(frame, problem, config,
                                               spectral, eps, snapshot,
                                               counters)
            rows.append(f"{eps!r},{len(vv)},{counters.total},{h1e!r}")
        _write(config.output, "sweep.csv", "\n".join(rows) + "\n")
        if len(config.sweep) >= 4:
            slope, r2 = fit_scaling(os.path.join(config.output, "sweep.csv"))
            extra.append(f"sweep_support_slope = {slope!r} (r2 = {r2!r})")
    _write(config.output, "report.txt",
           _report_text(config, spectral, cert, extra))
    return 0


def run_spectrum(config: ExperimentConfig) -> int:
    frame = load_frame_file(config.frame_path)
    problem = build_problem(config, frame)
    spectral = operators.estimate_spectrum(frame, problem.spec)
    f_vec = analyze(frame, problem.forcing)
    try:
        cert = check_contraction(frame, problem.spec, problem.nl, f_vec)
    except CertificationError as exc:
        print("certification failed: " + str(exc), file=sys.stderr)
        return 2
    os.makedirs(config.output, exist_ok=True)
    text = _report_text(config, spectral, cert)
    _write(config.output, "report.txt", text)
    sys.stdout.write(text)
    return 0


def run_decompose(config: ExperimentConfig, n_functions: int = 20) -> int:
    frame = load_frame_file(config.frame_path)
    if frame.dim != 1:
        print("decompose experiment is defined for 1D frames", file=sys.stderr)
        return 1
    ws = frame.workspace()
    rng = np.random.default_rng(config.seed)
    rows = ["fn,l2_error,best_error,h1_norm,coeff_norm"]
    for n in range(n_functions):
        coefs = rng.standard_normal(8) / (1.0 + np.arange(8)) ** 2

        def u(x, c=coefs):
            return sum(ck * np.sin((k + 1) * math.pi * x)
                       for k, ck in enumerate(c))

        parts = decompose(frame, u)
        rec = sum(ws.synth_grid(ws.to_dense(p)) for p in parts)
        err = ws.l2_of_grid(ws.grid_values(u) - rec)
        best = oracle.full_span_projection_coeffs(frame, u)
        best_err = ws.l2_of_grid(ws.grid_values(u) - ws.synth_grid(ws.to_dense(best)))
        du_dense = sum(ws.to_dense(p) for p in parts)
        h1 = float(np.sqrt(du_dense @ ws.h1_gram() @ du_dense))
        cnorm = float(np.linalg.norm(np.concatenate(
            [ws.to_dense(p)[ws.patch_positions(i)] for i, p in enumerate(parts)])))
        rows.append(f"{n},{err!r},{best_err!r},{h1!r},{cnorm!r}")
    os.makedirs(config.output, exist_ok=True)
    _write(config.output, "decompose.csv", "\n".join(rows) + "\n")
    return 0


def fit_scaling(sweep_csv_path):
    """Least-squares slope of log(support) against log(1/epsilon)."""
    with open(sweep_csv_path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln][1:]
    if len(lines) < 4:
        raise ValueError("fit_scaling needs at least 4 sweep points")
    eps = np.array([float(ln.split(",")[0]) for ln in lines])
    supp = np.array([float(ln.split(",")[1]) for ln in lines])
    return _loglog_fit(1.0 / eps, supp)


def _loglog_fit(x, y):
    lx, ly = np.log(x), np.log(np.maximum(y, 1.0))
    slope, intercept = np.polyfit(lx, ly, 1)
    fit = slope * lx + intercept
    ss_res = float(np.sum((ly - fit) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def _write(outdir, name, text):
    with open(os.path.join(outdir, name), "w", encoding="utf-8") as fh:
        fh.write(text)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="framesolve",
        description="adaptive frame solver experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep", "spectrum", "decompose"):
        p = sub.add_parser(name)
        p.add_argument("config")
    try:
        args = parser.parse_args(argv)
    except SystemExit:
        return 1
    try:
        config = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "spectrum":
            return run_spectrum(config)
        if args.command == "decompose":
            return run_decompose(config)
        if args.command == "sweep" and not config.sweep:
            print("config error: key 'sweep' is empty", file=sys.stderr)
            return 1
        return run(config)
    except CertificationError as exc:
        print("certification failed: " + str(exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
