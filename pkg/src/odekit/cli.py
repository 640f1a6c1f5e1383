"""Command-line interface: ``odekit <command> MODEL [options]``.

Errors are reported on stderr as one JSON line ``{"error": ..., "message": ...}``
with exit status 1.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import _parallel
from . import expr as ex
from . import io as mio
from .common_models import TEMPLATES, get_model
from .confidence import METHODS as CI_METHODS
from .epi import dfe, r0
from .errors import OdekitError
from .integrate import SolverConfig, integrate
from .loss import LOSSES, fit, make_loss
from .model import unroll
from .stochastic import simulate_jump, simulate_param

STRICT_SEED_ENV = "ODEKIT_STRICT_SEED"


class CliError(OdekitError):
    """Invalid command-line input."""


def _load(spec: str):
    """A model file path, or ``builtin:<name>`` for a bundled template."""
    if spec.startswith("builtin:"):
        return get_model(spec.split(":", 1)[1])
    return mio.load_model(spec)


def _grid(args, model):
    if args.times:
        return np.array([float(v) for v in args.times.split(",")])
    if args.grid:
        start, stop, num = args.grid
        return np.linspace(float(start), float(stop), int(num))
    raise CliError("give --grid START STOP NUM or --times t1,t2,...")


def _seed(args):
    if args.seed is not None:
        return args.seed
    if os.environ.get(STRICT_SEED_ENV):
        raise CliError(f"--seed is required when {STRICT_SEED_ENV} is set")
    return _parallel.fresh_seed()


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _config(args):
    return SolverConfig(rtol=args.rtol, atol=args.atol)


# -- commands ----------------------------------------------------------------

def cmd_solve(args):
    model = _load(args.model)
    times = _grid(args, model)
    traj = integrate(model, times, _config(args))
    _emit(mio.trajectory_csv(traj.times, traj.values, model.states), args.out)


def cmd_simulate(args):
    model = _load(args.model)
    times = _grid(args, model)
    seed = _seed(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    if args.mode == "param":
        dists = getattr(model, "distributions", None) or {}
        mean, sims = simulate_param(model, times, dists, iterations=args.iterations, seed=seed,
                                    config=_config(args))
        for i, s in enumerate(sims):
            path = out_dir / f"{args.prefix}_{i}.csv"
            mio.write_trajectory(path, s.times, s.values, model.states)
            files.append(str(path))
        mean_path = out_dir / f"{args.prefix}_mean.csv"
        mio.write_trajectory(mean_path, mean.times, mean.values, model.states)
        extra = {"mean": str(mean_path)}
    else:
        if not model.is_transition_form:
            model = unroll(model)
        values, jumps = simulate_jump(model, times, iterations=args.iterations, method=args.method,
                                      seed=seed)
        for i, v in enumerate(values):
            path = out_dir / f"{args.prefix}_{i}.csv"
            mio.write_trajectory(path, times, v, model.states)
            files.append(str(path))
        extra = {"events": [int(len(j)) for j in jumps]}
    summary = {"command": "simulate", "mode": args.mode, "iterations": args.iterations,
               "seed": seed, "files": files, **extra}
    sys.stdout.write(mio.to_json(summary))


def _bounds(args, names):
    if not args.bounds:
        return None
    out = {n: (None, None) for n in names}
    for item in args.bounds:
        try:
            name, rng = item.split("=", 1)
            lo, hi = rng.split(":", 1)
            out[name] = (float(lo) if lo else None, float(hi) if hi else None)
        except ValueError:
            raise CliError(f"bad bound {item!r}; expected name=lower:upper") from None
        if name not in names:
            raise CliError(f"bound for {name!r}, which is not a fitted parameter")
    return [out[n] for n in names]


def _loss(args):
    model = _load(args.model)
    if model.initial_values is None:
        raise CliError("the model file needs 'initial' values for fitting")
    states = args.states.split(",") if args.states else None
    t, y, names = mio.read_observations(args.data, states)
    x0, t0 = model.initial_values
    target = args.params.split(",") if args.params else list(model.params)
    if args.theta0:
        theta0 = [float(v) for v in args.theta0.split(",")]
    else:
        missing = [p for p in target if p not in model.parameters]
        if missing:
            raise CliError(f"no starting value for {missing}; give --theta0")
        theta0 = [model.parameters[p] for p in target]
    loss = make_loss(args.loss, theta0, model, x0, t0, t, y, names, target_param=target,
                     config=_config(args))
    return loss, _bounds(args, target)


def _fit_summary(res):
    return {"theta": res.as_dict(), "cost": res.cost, "converged": res.converged,
            "iterations": res.iterations, "active_lower": res.active_lower.tolist(),
            "active_upper": res.active_upper.tolist(), "message": res.message}


def cmd_fit(args):
    loss, bounds = _loss(args)
    res = fit(loss, bounds)
    doc = {"command": "fit", "loss": args.loss, **_fit_summary(res)}
    _emit(mio.to_json(doc), args.out)


def cmd_ci(args):
    loss, bounds = _loss(args)
    res = fit(loss, bounds)
    kwargs = {}
    if args.method == "profile":
        kwargs["bounds"] = bounds
    elif args.method == "bootstrap":
        kwargs.update(bounds=bounds, iterations=args.iterations, seed=_seed(args),
                      full_output=args.full_output)
    interval = CI_METHODS[args.method](loss, res.theta, args.alpha, **kwargs)
    doc = {"command": "ci", "loss": args.loss, "fit": _fit_summary(res), "interval": interval.as_dict()}
    _emit(mio.to_json(doc), args.out)


def cmd_r0(args):
    model = _load(args.model)
    if not model.is_transition_form:
        model = unroll(model)
    symbolic = True if args.symbolic else None
    value = r0(model, args.disease_states, symbolic=symbolic)
    eq = dfe(model, args.disease_states, args.dfe_states or None) if args.dfe_states is not None else None
    doc = {"command": "r0", "disease_states": args.disease_states,
           "r0": ex.to_string(value) if isinstance(value, ex.Expr) else value}
    if eq is not None:
        doc["dfe"] = {k: ex.to_string(v) for k, v in eq.items()}
    sys.stdout.write(mio.to_json(doc))


def cmd_unroll(args):
    _emit(mio.dumps_model(unroll(_load(args.model))), args.out)


def cmd_print(args):
    sys.stdout.write(_load(args.model).print_ode(latex_output=args.latex) + "\n")


def cmd_models(args):
    for name, t in TEMPLATES.items():
        sys.stdout.write(f"{name}\t{t.description}\n")


# -- parser ------------------------------------------------------------------

def _add_grid(p):
    p.add_argument("--grid", nargs=3, metavar=("START", "STOP", "NUM"), help="evenly spaced times")
    p.add_argument("--times", help="comma-separated times")


def _add_solver(p):
    p.add_argument("--rtol", type=float, default=1e-8)
    p.add_argument("--atol", type=float, default=1e-8)


def _add_fit(p):
    p.add_argument("--data", required=True, help="observation CSV with a 't' column")
    p.add_argument("--loss", choices=sorted(LOSSES), default="square")
    p.add_argument("--states", help="comma-separated observed columns (default: all)")
    p.add_argument("--params", help="comma-separated parameters to fit (default: all)")
    p.add_argument("--theta0", help="comma-separated starting values")
    p.add_argument("--bounds", nargs="+", metavar="NAME=LO:HI")
    p.add_argument("--out")
    _add_solver(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="odekit", description="ODE model toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="integrate the model deterministically")
    p.add_argument("model")
    _add_grid(p)
    _add_solver(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="stochastic realizations")
    p.add_argument("model")
    _add_grid(p)
    _add_solver(p)
    p.add_argument("--mode", choices=["param", "jump"], default="jump")
    p.add_argument("--method", choices=["tau_leap", "exact"], default="tau_leap")
    p.add_argument("--iterations", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--prefix", default="sim")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="estimate parameters from observations")
    p.add_argument("model")
    _add_fit(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("ci", help="fit, then a confidence interval")
    p.add_argument("model")
    _add_fit(p)
    p.add_argument("--method", choices=sorted(CI_METHODS), default="asymptotic")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--full-output", action="store_true")
    p.set_defaults(func=cmd_ci)

    p = sub.add_parser("r0", help="basic reproduction number")
    p.add_argument("model")
    p.add_argument("--disease-states", nargs="+", required=True)
    p.add_argument("--symbolic", action="store_true", help="symbolic even when values are known")
    p.add_argument("--dfe-states", nargs="*", help="also report the disease-free equilibrium (of these states, or all)")
    p.set_defaults(func=cmd_r0)

    p = sub.add_parser("unroll", help="rewrite explicit ODEs as transitions")
    p.add_argument("model")
    p.add_argument("--out")
    p.set_defaults(func=cmd_unroll)

    p = sub.add_parser("print", help="show the equations")
    p.add_argument("model")
    p.add_argument("--latex", action="store_true")
    p.set_defaults(func=cmd_print)

    p = sub.add_parser("models", help="list bundled templates")
    p.set_defaults(func=cmd_models)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (OdekitError, ValueError, OSError, ArithmeticError) as exc:
        field = {k: getattr(exc, k) for k in ("field", "line") if getattr(exc, k, None) is not None}
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), **field}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
