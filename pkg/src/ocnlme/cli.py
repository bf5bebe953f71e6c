"""Command-line entry point: ``ocnlme simulate|fit|cv|mc``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import EstimationConfig, jobs_from_env
from .cv import select_U
from .errors import ConfigurationError, OcnlmeError
from .lq import SCHEMES
from .models import BUILTIN_NAMES, builtin_model
from .population import GaussianLogPrior, fit_population
from .sdre import SdreConfig
from .simulation import SCENARIOS, builtin_scenario, run_monte_carlo, simulate_population
from .uncertainty import attach_variance, residual_control_report, sandwich_covariance

DEFAULTS = {
    "model": "linear2d",
    "u": None,
    "mesh_refine": None,
    "scheme": "exponential",
    "jobs": None,
    "seed": 0,
    "out": ".",
    "with_variance": False,
    "controls": False,
    "u_grid": "0.01,1,100,10000",
    "runs": 20,
    "start_at": None,
    "data": None,
    "sdre_eps_traj": 1e-6,
    "sdre_eps_cost": 1e-8,
    "sdre_max_iters": 100,
    "outer_maxfev": 2000,
    "inner_maxfev_per_q": 500,
    "sigma": None,
    "psi": None,
    "n": None,
    "misspecified": False,
    "prior_mean": None,
    "prior_var": None,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("UsageError", message, 2)


def _emit_error(kind: str, message: str, code: int):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    sys.exit(code)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ocnlme", description="Mixed-effect ODE estimation by optimal-control tracking.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of option values; flags override it")
    common.add_argument("--model", choices=BUILTIN_NAMES, default=None)
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="worker count (default: OCNLME_JOBS or 1)")
    common.add_argument("--u", help="control penalty: scalar, or path to a JSON matrix")
    common.add_argument("--mesh-refine", type=int, help="mesh steps per observation gap")
    common.add_argument("--scheme", choices=SCHEMES)
    common.add_argument("--sdre-eps-traj", type=float)
    common.add_argument("--sdre-eps-cost", type=float)
    common.add_argument("--sdre-max-iters", type=int)
    common.add_argument("--outer-maxfev", type=int)
    common.add_argument("--inner-maxfev-per-q", type=int)
    common.add_argument("--prior-mean", help="Gaussian prior mean on (theta, delta), comma-separated")
    common.add_argument("--prior-var", help="Gaussian prior variances, comma-separated or scalar")
    bool_kw = dict(action="store_true", default=None)

    s = sub.add_parser("simulate", parents=[common], help="simulate a cohort from a built-in scenario")
    s.add_argument("--n", type=int, help="number of subjects")
    s.add_argument("--sigma", type=float)
    s.add_argument("--psi", help="random-effect standard deviations, comma-separated")
    s.add_argument("--misspecified", **bool_kw)

    f = sub.add_parser("fit", parents=[common], help="fit a population")
    f.add_argument("--data")
    f.add_argument("--start-at", help="truth or fit JSON giving the start point")
    f.add_argument("--with-variance", **bool_kw)
    f.add_argument("--controls", **bool_kw, help="write the residual-control CSVs")

    c = sub.add_parser("cv", parents=[common], help="select U by forward cross-validation")
    c.add_argument("--data")
    c.add_argument("--start-at")
    c.add_argument("--u-grid", help="comma-separated scalar candidates")

    m = sub.add_parser("mc", parents=[common], help="Monte-Carlo study of a built-in scenario")
    m.add_argument("--runs", type=int)
    m.add_argument("--n", type=int)
    m.add_argument("--sigma", type=float)
    m.add_argument("--psi")
    m.add_argument("--misspecified", **bool_kw)
    m.add_argument("--with-variance", **bool_kw)
    return p


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge defaults, the ``--config`` file, and explicit flags (in that order)."""
    opts = dict(DEFAULTS)
    if args.command == "mc":
        opts["with_variance"] = True
    if args.config:
        cfg = io.read_json(args.config)
        if not isinstance(cfg, dict):
            raise ConfigurationError("config file must hold a JSON object")
        for k, v in cfg.items():
            key = k.replace("-", "_")
            if key not in DEFAULTS:
                raise ConfigurationError(f"unknown config key {k!r}")
            opts[key] = v
    for k, v in vars(args).items():
        if k in DEFAULTS and v is not None:
            opts[k] = v
    if opts["jobs"] is None:
        opts["jobs"] = jobs_from_env(1)
    if int(opts["jobs"]) < 1:
        raise ConfigurationError("--jobs must be >= 1")
    if opts["model"] not in BUILTIN_NAMES:
        raise ConfigurationError(f"unknown model {opts['model']!r}")
    opts["command"] = args.command
    return opts


def estimation_config(opts) -> EstimationConfig:
    sdre = SdreConfig(eps_traj=float(opts["sdre_eps_traj"]), eps_cost=float(opts["sdre_eps_cost"]),
                      max_iters=int(opts["sdre_max_iters"]))
    refine = opts["mesh_refine"]
    return EstimationConfig(
        refine=None if refine is None else int(refine), scheme=opts["scheme"], sdre=sdre,
        outer_maxfev=int(opts["outer_maxfev"]), inner_maxfev_per_q=int(opts["inner_maxfev_per_q"]),
        jobs=int(opts["jobs"]),
    )


def _penalty(opts, model):
    raw = opts["u"]
    if raw is None:
        spec = SCENARIOS.get(model.name)
        return float(spec.U) if spec is not None else 1.0
    if isinstance(raw, (int, float, list)):
        return raw
    try:
        return float(raw)
    except ValueError:
        return io.read_json(raw)


def _prior(opts, model):
    if opts["prior_mean"] is None:
        return None
    mean = _floats(opts["prior_mean"]) if isinstance(opts["prior_mean"], str) else opts["prior_mean"]
    var = opts["prior_var"] if opts["prior_var"] is not None else 1.0
    var = _floats(var) if isinstance(var, str) else var
    if len(mean) != model.p + model.q:
        raise ConfigurationError(f"prior mean needs {model.p + model.q} entries")
    return GaussianLogPrior(np.asarray(mean, float), np.asarray(var, float))


def _scenario(opts):
    name = opts["model"]
    if name not in SCENARIOS:
        raise ConfigurationError(f"no simulation scenario for {name!r}; available: {', '.join(SCENARIOS)}")
    over = {"seed": int(opts["seed"])}
    if opts["n"] is not None:
        over["n"] = int(opts["n"])
    if opts["sigma"] is not None:
        over["sigma"] = float(opts["sigma"])
    q = len(SCENARIOS[name].psi)
    if opts["psi"] is not None:
        psi = _floats(opts["psi"]) if isinstance(opts["psi"], str) else list(np.atleast_1d(opts["psi"]))
        over["psi"] = tuple(float(v) for v in np.broadcast_to(psi, (q,)))
    if opts["u"] is not None:
        over["U"] = float(opts["u"])
    return builtin_scenario(name, misspecified=bool(opts["misspecified"]), **over)


def _out_dir(opts) -> Path:
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _population(opts, model):
    if opts["data"] is None:
        raise ConfigurationError("--data is required")
    return io.load_dataset(opts["data"], d_obs=model.d_obs)


def _start(opts, model):
    if opts["start_at"] is not None:
        return io.start_point(io.read_json(opts["start_at"]), model)
    spec = SCENARIOS.get(model.name)
    if spec is None:
        raise ConfigurationError("--start-at is required for this model")
    return np.asarray(spec.theta, float), spec.delta_true


def cmd_simulate(opts) -> dict:
    spec = _scenario(opts)
    out = _out_dir(opts)
    population, truths = simulate_population(spec)
    io.write_dataset(out / "data.csv", population)
    io.write_json(out / "truth.json", io.truth_to_dict(spec, truths))
    return {"data": str(out / "data.csv"), "truth": str(out / "truth.json")}


def cmd_fit(opts) -> dict:
    model = builtin_model(opts["model"])
    cfg = estimation_config(opts)
    population = _population(opts, model)
    out = _out_dir(opts)
    fit = fit_population(population, model, _penalty(opts, model), _start(opts, model), _prior(opts, model), cfg)
    variance = None
    if opts["with_variance"]:
        variance = attach_variance(fit, sandwich_covariance(fit, population, model, cfg))
    written = {"fit": str(io.write_json(out / "fit.json", io.fit_to_dict(fit, variance)))}
    if opts["with_variance"] or opts["controls"]:
        p1, p2 = io.write_controls(out, residual_control_report(fit, population, model))
        written.update(controls=str(p1), controls_summary=str(p2))
    return written


def cmd_cv(opts) -> dict:
    model = builtin_model(opts["model"])
    cfg = estimation_config(opts)
    population = _population(opts, model)
    out = _out_dir(opts)
    grid = _floats(opts["u_grid"]) if isinstance(opts["u_grid"], str) else list(opts["u_grid"])
    res = select_U(population, model, grid, _start(opts, model), _prior(opts, model), cfg)
    io.write_cv_table(out / "cv.csv", res.table)
    io.write_json(out / "fit.json", io.fit_to_dict(res.fit))
    return {"cv": str(out / "cv.csv"), "fit": str(out / "fit.json"), "U_best": res.U_best, "errors": res.errors}


def cmd_mc(opts) -> dict:
    spec = _scenario(opts)
    out = _out_dir(opts)
    cfg = estimation_config(opts).with_(jobs=1)
    summary = run_monte_carlo(spec, cfg, n_mc=int(opts["runs"]), with_variance=bool(opts["with_variance"]),
                              jobs=int(opts["jobs"]))
    io.write_mc_summary(out / "mc.csv", summary)
    return {"mc": str(out / "mc.csv"), "runs": summary.runs, "failures": summary.failures}


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "cv": cmd_cv, "mc": cmd_mc}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        opts = resolve_options(args)
        result = COMMANDS[args.command](opts)
    except OcnlmeError as exc:
        _emit_error(type(exc).__name__, str(exc), exc.exit_code)
    sys.stdout.write(json.dumps(io._jsonable(result)) + "\n")
    return 0


__all__ = ["main", "build_parser", "resolve_options"]
