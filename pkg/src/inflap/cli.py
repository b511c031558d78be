"""Batch driver: ``inflap <command> --config run.yaml --out DIR``.

Commands are ``solve``, ``eigen``, ``kpp``, ``liouville`` and
``oracle-check``.  Configuration is resolved as built-in defaults, then the
YAML file, then environment variables ``INFLAP_<SECTION>__<KEY>`` (values
parsed as YAML scalars).  The resolved record is written next to every
output file.

Exit codes: 0 success, 2 invalid configuration, 3 solver did not converge,
4 certificate failure.
"""
from __future__ import annotations

import argparse
import copy
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

from . import __version__
from .core import Annulus, Ball, Box, Grid, MaskError, Sampler, ScalarField, build_mask
from .dirichlet import SolverConfig, relax_to_steady
from .eigen import BracketError, EigenConfig, hopf_fit, principal_eigenvalue
from .io import OutputError, emit_field, emit_table, emit_trace
from .operator import CoefficientSet, potential_term
from . import kpp as kppmod
from . import liouville as lmod
from . import oracles

log = logging.getLogger("inflap")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CERT = 0, 2, 3, 4
COMMANDS = ("solve", "eigen", "kpp", "liouville", "oracle-check")
ENV_PREFIX = "INFLAP_"


class ConfigError(ValueError):
    pass


class CertificateError(RuntimeError):
    pass


class NotConverged(RuntimeError):
    pass


BASE: Dict[str, Dict[str, Any]] = {
    "operator": {"gamma": 0.0, "drift": "none", "drift_scale": 1.0, "potential": 0.0},
    "domain": {
        "dim": 1, "shape": "ball", "center": None, "radius": 1.0, "lo": None, "hi": None,
        "r_in": None, "h": 0.01, "stencil_radius": 1, "directions": "default",
    },
    "problem": {},
    "solver": {"tol_residual": 1e-8, "max_iters": 5000},
    "output": {"field": True, "trace": True},
}

DEFAULTS: Dict[str, Dict[str, Dict[str, Any]]] = {
    "solve": {
        "problem": {"rhs": 0.0, "boundary": "affine", "slope": 1.0, "offset": 0.0, "alpha": 4.0 / 3.0},
    },
    "eigen": {
        "operator": {"gamma": 2.0},
        "domain": {"h": 0.005},
        "solver": {"bracket_tol": 0.01},
    },
    "kpp": {
        "operator": {"drift": "radial_decay"},
        "domain": {"h": 0.05},
        "problem": {"f": "kpp_power", "alpha": 1.0},
        "solver": {"radii": [10.0, 20.0, 40.0], "cauchy_tol": 1e-3},
    },
    "liouville": {
        "problem": {"experiment": "theta", "alphas": [-0.25, -0.5, -0.75], "epsilon": 1.0,
                    "beta": 1.0, "r_out": 4.0},
        "domain": {"h": 0.01},
        "solver": {"radii": [4.0, 8.0, 16.0], "tol_residual": 1e-9},
    },
    "oracle-check": {
        "problem": {"gammas": [0.0, 1.0, 2.0], "hs": [0.01, 0.005], "rel_tol": 0.01},
    },
}


# --------------------------------------------------------------------------
# configuration


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if k not in out:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {path + k!r} must be a mapping")
            out[k] = _merge(out[k], v, path + k + ".")
        else:
            out[k] = v
    return out


def _section_defaults(command: str) -> dict:
    base = copy.deepcopy(BASE)
    for sec, vals in DEFAULTS[command].items():
        base[sec].update(vals)
    return base


def env_overrides(environ=None) -> dict:
    """``INFLAP_SECTION__KEY=value`` pairs as a nested mapping."""
    environ = os.environ if environ is None else environ
    out: dict = {}
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        sec, key = name[len(ENV_PREFIX):].lower().split("__", 1)
        out.setdefault(sec, {})[key] = yaml.safe_load(raw)
    return out


def resolve_config(command: str, path: Optional[str], environ=None) -> dict:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    cfg = _section_defaults(command)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"config {path} is not valid YAML: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        data.pop("command", None)
        cfg = _merge(cfg, data)
    cfg = _merge(cfg, env_overrides(environ))
    cfg["command"] = command
    return cfg


# --------------------------------------------------------------------------
# builders (all validation happens here, before any solve)


def _num(x, name, lo=-np.inf, hi=np.inf, strict_lo=False):
    try:
        v = float(x)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {x!r}")
    if not np.isfinite(v) or v < lo or v > hi or (strict_lo and v <= lo):
        raise ConfigError(f"{name}={v} outside its admissible range")
    return v


def build_domain(d: dict):
    dim = int(d["dim"])
    if dim not in (1, 2, 3):
        raise ConfigError("domain.dim must be 1, 2 or 3")
    h = _num(d["h"], "domain.h", 0.0, strict_lo=True)
    center = tuple(d["center"]) if d["center"] is not None else (0.0,) * dim
    if len(center) != dim:
        raise ConfigError("domain.center has the wrong length")
    kind = d["shape"]
    try:
        shape = _shape(kind, d, center)
    except ValueError as e:
        raise ConfigError(f"domain: {e}") from e
    lo, hi = shape.bounds()
    half = float(np.max(np.abs(np.concatenate([lo, hi]))))
    try:
        grid = Grid.centered(dim, h, half, int(d["stencil_radius"]), d["directions"])
        mask = build_mask(grid, shape)
    except (MaskError, ValueError) as e:
        raise ConfigError(f"domain: {e}") from e
    return grid, mask


def _shape(kind, d, center):
    if kind == "ball":
        shape = Ball(center, _num(d["radius"], "domain.radius", 0.0, strict_lo=True))
    elif kind == "annulus":
        shape = Annulus(center, _num(d["r_in"], "domain.r_in", 0.0, strict_lo=True), _num(d["radius"], "domain.radius"))
    elif kind == "box":
        if d["lo"] is None or d["hi"] is None:
            raise ConfigError("box domains need lo and hi")
        shape = Box(tuple(d["lo"]), tuple(d["hi"]))
    else:
        raise ConfigError(f"unknown domain.shape {kind!r}")
    return shape


def build_drift(op: dict, dim: int):
    kind, scale = op["drift"], _num(op["drift_scale"], "operator.drift_scale")
    if kind in (None, "none"):
        return kppmod.DriftSpec()
    if kind == "radial_decay":
        return kppmod.DriftSpec.radial_decay(scale)
    if kind == "inward":
        return kppmod.inward_drift(scale, 0.5)
    raise ConfigError(f"unknown operator.drift {kind!r}")


def build_coeffs(op: dict, dim: int) -> CoefficientSet:
    gamma = _num(op["gamma"], "operator.gamma", 0.0, 2.0)
    drift = build_drift(op, dim)
    c = _num(op["potential"], "operator.potential")
    return CoefficientSet(gamma, q=drift.q, c=Sampler.constant(c) if c != 0 else None)


def build_solver(s: dict) -> SolverConfig:
    try:
        return SolverConfig(
            tol_residual=_num(s.get("tol_residual", 1e-8), "solver.tol_residual", 0.0, strict_lo=True),
            max_iters=int(s.get("max_iters", 5000)),
        )
    except ValueError as e:
        raise ConfigError(f"solver: {e}") from e


def build_nonlinearity(p: dict, gamma: float) -> kppmod.Nonlinearity:
    kind = p.get("f", "kpp_power")
    if kind == "kpp_power":
        return kppmod.kpp_power(gamma)
    if kind == "absorption":
        return kppmod.absorption(3.0 - gamma)
    if kind == "zero":
        return kppmod.zero_reaction()
    if kind == "heterogeneous":
        return kppmod.heterogeneous_example(_num(p.get("alpha", 1.0), "problem.alpha", 0.0, 3.0 - gamma, True))
    if kind == "absorbing_outside_ball":
        return kppmod.absorbing_outside_ball(gamma)
    raise ConfigError(f"unknown problem.f {kind!r}")


def _boundary(p: dict, dim: int) -> Sampler:
    kind = p["boundary"]
    if kind == "constant":
        v = _num(p["offset"], "problem.offset")
        return Sampler.constant(v)
    if kind == "affine":
        a, b = _num(p["slope"], "problem.slope"), _num(p["offset"], "problem.offset")
        return Sampler(lambda x: a * x[:, 0] + b, note="affine")
    if kind == "aronsson":
        if dim != 2:
            raise ConfigError("the aronsson boundary needs dim 2")
        return Sampler(lambda x: np.abs(x[:, 0]) ** (4 / 3) - np.abs(x[:, 1]) ** (4 / 3), note="aronsson")
    if kind == "radial_power":
        al = _num(p["alpha"], "problem.alpha")
        return Sampler.radial(lambda r: r**al, note="radial power")
    raise ConfigError(f"unknown problem.boundary {kind!r}")


# --------------------------------------------------------------------------
# commands


def _out(out: Path, name: str) -> Path:
    return out / name


def run_solve(cfg: dict, out: Path, workers: int) -> int:
    grid, mask = build_domain(cfg["domain"])
    coeffs = build_coeffs(cfg["operator"], grid.dim)
    p = cfg["problem"]
    rhs = _num(p["rhs"], "problem.rhs")
    coeffs = coeffs.replace(h_rhs=Sampler.constant(rhs) if rhs else None)
    g = _boundary(p, grid.dim)
    scfg = build_solver(cfg["solver"])
    term = None
    if coeffs.c is not None:
        term = potential_term(coeffs.c(mask.coords("interior")), 3.0 - coeffs.gamma)
        coeffs = coeffs.replace(c=None)
    vals = np.full(grid.n_nodes, np.nan)
    vals[mask.boundary] = g(mask.coords("boundary"))
    vals[mask.interior] = float(np.mean(vals[mask.boundary]))
    rep = relax_to_steady(ScalarField(mask, vals, g), coeffs, term, g, scfg)
    meta = {"config": cfg, "status": rep.status, "iterations": rep.iterations,
            "final_residual": rep.final_residual}
    emit_field(rep.field, _out(out, "field.csv"), meta)
    emit_trace(rep.residuals, _out(out, "trace.csv"), meta=meta)
    print(f"solve {rep.status}: {rep.iterations} iterations, residual {rep.final_residual:.3e}")
    if not rep.converged:
        raise NotConverged(f"relaxation ended with status {rep.status}")
    return EXIT_OK


def run_eigen(cfg: dict, out: Path, workers: int) -> int:
    grid, mask = build_domain(cfg["domain"])
    coeffs = build_coeffs(cfg["operator"], grid.dim)
    tol = _num(cfg["solver"].get("bracket_tol", 0.01), "solver.bracket_tol", 0.0, strict_lo=True)
    try:
        res = principal_eigenvalue(mask, coeffs, tol, EigenConfig())
    except BracketError as e:
        raise NotConverged(str(e)) from e
    nu = hopf_fit(res.eigenfunction)
    meta = {"config": cfg, "lambda_lo": res.lambda_lo, "lambda_hi": res.lambda_hi,
            "bracket_tol": tol, "hopf_nu": nu}
    emit_field(res.eigenfunction, _out(out, "eigenfunction.csv"), meta)
    emit_table(("probe", "lambda", "feasible", "sup_norm", "iterations"),
               [(i, lam, 1.0 if st == "converged" else 0.0, sup, it) for i, (lam, st, sup, it) in enumerate(res.probes)],
               _out(out, "probes.csv"), meta)
    print(f"lambda in [{res.lambda_lo:.10g}, {res.lambda_hi:.10g}]  hopf nu = {nu:.6g}")
    return EXIT_OK


def run_kpp(cfg: dict, out: Path, workers: int) -> int:
    op, d, s, p = cfg["operator"], cfg["domain"], cfg["solver"], cfg["problem"]
    gamma = _num(op["gamma"], "operator.gamma", 0.0, 2.0)
    dim = int(d["dim"])
    h = _num(d["h"], "domain.h", 0.0, strict_lo=True)
    f = build_nonlinearity(p, gamma)
    drift = build_drift(op, dim)
    radii = [float(r) for r in s["radii"]]
    if any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] <= 2 * h:
        raise ConfigError("solver.radii must be increasing and larger than 2h")
    scfg = build_solver(s)
    try:
        res = kppmod.solve_kpp_whole_space(f, drift, radii, gamma, h, dim, scfg,
                                           _num(s["cauchy_tol"], "solver.cauchy_tol", 0.0, strict_lo=True))
    except kppmod.SandwichViolation as e:
        raise CertificateError(str(e)) from e
    meta = {"config": cfg, "status": res.status, "trace": res.trace}
    emit_field(res.field, _out(out, "field.csv"), meta)
    keys = ["radius", "iterations", "center", "inner_min", "inner_max", "diff", "sandwich_gap"]
    emit_table(keys, [[e[k] for k in keys] for e in res.trace], _out(out, "trace.csv"), meta)
    print(f"kpp {res.status}: center {res.trace[-1]['center']:.10g}")
    if not res.converged:
        raise NotConverged("exhaustion trace is not Cauchy")
    return EXIT_OK


def _theta_job(args):
    a, cfgd, r_out = args
    rep = lmod.certify_theta_subsolution(lmod.ExperimentConfig(**cfgd).replace(alpha_test=a), r_out)
    return rep


def run_liouville(cfg: dict, out: Path, workers: int) -> int:
    op, d, s, p = cfg["operator"], cfg["domain"], cfg["solver"], cfg["problem"]
    try:
        ecfg = lmod.ExperimentConfig(
            gamma=_num(op["gamma"], "operator.gamma", 0.0, 2.0),
            epsilon=_num(p["epsilon"], "problem.epsilon", 0.0, strict_lo=True),
            beta=_num(p["beta"], "problem.beta"),
            radii=tuple(float(r) for r in s["radii"]),
            h=_num(d["h"], "domain.h", 0.0, strict_lo=True),
            tol=_num(s["tol_residual"], "solver.tol_residual", 0.0, strict_lo=True),
            dim=int(d["dim"]),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e
    kind = p["experiment"]
    meta: Dict[str, Any] = {"config": cfg}
    if kind == "theta":
        alphas = [float(a) for a in p["alphas"]]
        if not all(-1 < a < 0 for a in alphas):
            raise ConfigError("problem.alphas must lie in (-1, 0)")
        jobs = [(a, ecfg.__dict__, float(p["r_out"])) for a in alphas]
        reps = _map(_theta_job, jobs, workers)
        rows = [(r.alpha, r.min_margin, r.max_deviation, r.worst_radius, float(r.passed)) for r in reps]
        emit_table(("alpha", "min_margin", "max_deviation", "worst_radius", "passed"), rows,
                   _out(out, "theta.csv"), meta)
        if not all(r.passed for r in reps):
            raise CertificateError("theta certificate fails")
    elif kind == "sharpness":
        rep = lmod.sharpness_counterexample(ecfg.h if ecfg.h <= 1e-3 else 1e-3)
        emit_table(("x", "value", "exact"), np.column_stack([rep.x, rep.values, rep.exact]),
                   _out(out, "sharpness.csv"), {**meta, "max_error": rep.max_error, "max_value": rep.max_value})
        if rep.max_value > 0:
            raise CertificateError("sharpness residual is positive somewhere")
    elif kind == "II":
        drift = build_drift(op, ecfg.dim)
        try:
            rep = lmod.liouville_II_experiment(ecfg, drift.q)
        except lmod.EnvelopeCertificateError as e:
            raise CertificateError(str(e)) from e
        emit_table(("radius", "inf", "oscillation", "comparison_gap"),
                   list(zip(rep.radii, rep.inf_values, rep.oscillations, rep.comparison_gaps)),
                   _out(out, "liouville2.csv"), meta)
    elif kind == "III":
        try:
            rep = lmod.liouville_III_experiment(ecfg)
        except lmod.EnvelopeCertificateError as e:
            raise CertificateError(str(e)) from e
        emit_table(("radius", "kappa", "sup_plus"), list(zip(rep.radii, rep.kappas, rep.sup_plus)),
                   _out(out, "liouville3.csv"), {**meta, "alpha": rep.alpha, "c": rep.c})
    else:
        raise ConfigError(f"unknown problem.experiment {kind!r}")
    return EXIT_OK


def _agreement_job(args):
    i, g, h = args
    p, lo, hi = oracles.DEFAULT_CASES[i]
    return oracles.discrete_agreement(p, g, h, lo, hi)


def run_oracle_check(cfg: dict, out: Path, workers: int) -> int:
    p = cfg["problem"]
    gammas = [_num(g, "problem.gammas", 0.0, 2.0) for g in p["gammas"]]
    hs = sorted((_num(h, "problem.hs", 0.0, strict_lo=True) for h in p["hs"]), reverse=True)
    rel_tol = _num(p["rel_tol"], "problem.rel_tol", 0.0, strict_lo=True)
    jobs = [(i, g, h) for i in range(len(oracles.DEFAULT_CASES)) for g in gammas for h in hs]
    rows = _map(_agreement_job, jobs, workers)
    emit_table(("profile", "gamma", "h", "abs_error", "rel_error"),
               [(r.profile.replace(",", ";"), r.gamma, r.h, r.abs_error, r.rel_error) for r in rows],
               _out(out, "oracle_check.csv"), {"config": cfg})
    for r in rows:
        print(f"{r.profile:60s} gamma={r.gamma:<4g} h={r.h:<8g} rel={r.rel_error:.3e}")
    n = len(hs)
    bad = []
    for k in range(0, len(rows), n):
        errs = [r.abs_error for r in rows[k:k + n]]
        if any(b >= a for a, b in zip(errs, errs[1:])) or rows[k + n - 1].rel_error > rel_tol:
            bad.append(rows[k].profile)
    if bad:
        raise CertificateError(f"oracle agreement fails for {bad}")
    return EXIT_OK


def _map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


RUNNERS = {
    "solve": run_solve,
    "eigen": run_eigen,
    "kpp": run_kpp,
    "liouville": run_liouville,
    "oracle-check": run_oracle_check,
}


def main(argv: Optional[List[str]] = None, environ=None) -> int:
    parser = argparse.ArgumentParser(prog="inflap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"inflap {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=None, help="YAML configuration file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = resolve_config(args.command, args.config, environ)
        cfg["seed"] = args.seed
        return RUNNERS[args.command](cfg, Path(args.out), args.workers)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NotConverged as e:
        print(f"not converged: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except CertificateError as e:
        print(f"certificate failure: {e}", file=sys.stderr)
        return EXIT_CERT
    except OutputError as e:
        print(f"output error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
