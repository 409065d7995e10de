"""Command-line entry point ``outstab``.

Exit codes: 0 success, 1 a requested check failed (the report is still
written), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .adaptive import (AdaptiveConfig, check_assumptions, closed_loop, initial_state,
                       nonuniformity_demo, omega_member, p_decay_check, scalar_demo_plant,
                       thm3_certificate)
from .barbalat import CATALOG, DEFAULT_EPS, Signal, catalog_signal, lemma3_check, prop2_check
from .certificates import ComparisonFn, check
from .convergence import analytic_bound, envelope, uniformity_sweep
from .errors import OutstabError
from .history import History
from .integrate import IntegratorConfig, integrate
from .presets import list_presets, preset
from .systems import builtin, list_systems, sample_domain

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- parsing helpers --------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from exc


def _param(text: str) -> tuple[str, float]:
    key, sep, val = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key.strip(), float(val)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"parameter {key!r} needs a number, got {val!r}") from exc


def parse_comparison(text: str) -> ComparisonFn:
    """``linear:c``, ``quadratic:c``, ``power:c:p``, ``capped:c:cap``."""
    kind, *args = text.split(":")
    try:
        nums = [float(a) for a in args]
    except ValueError as exc:
        raise UsageError(f"bad comparison function {text!r}") from exc
    builders = {"linear": (ComparisonFn.linear, 1), "quadratic": (ComparisonFn.quadratic, 1),
                "power": (ComparisonFn.power, 2), "capped": (ComparisonFn.capped, 2)}
    if kind not in builders:
        raise UsageError(f"unknown comparison kind {kind!r}; use linear, quadratic, power or capped")
    fn, arity = builders[kind]
    if len(nums) == 0 and arity == 1:
        nums = [1.0]
    if len(nums) != arity:
        raise UsageError(f"{kind} takes {arity} number(s), got {text!r}")
    return fn(*nums)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, History):
        return {"x(0)": obj.current().tolist(), "sup_norm": obj.sup_norm()}
    return repr(obj)


def _clean(obj):
    # JSON has no inf/nan; map them to strings so reports stay valid
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _config(args) -> dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _emit(args, payload: dict[str, Any]) -> None:
    report = {"schema_version": SCHEMA_VERSION, "version": __version__,
              "command": args.command, "config": _config(args), **payload}
    text = json.dumps(_clean(json.loads(json.dumps(report, default=_json_default))), indent=2)
    if getattr(args, "json", None):
        Path(args.json).write_text(text + "\n")
    else:
        print(text)


def _fmt(v: float) -> str:
    return repr(float(v)) if not math.isfinite(v) else f"{v:.17g}"


def _write_csv(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _system(args):
    return builtin(args.system, dict(args.param or []), getattr(args, "g", None))


def _integrator(args, t_f: float | None = None) -> IntegratorConfig:
    return IntegratorConfig(rel_tol=args.rtol, abs_tol=args.atol,
                            t_f=t_f if t_f is not None else args.tf, dde_step=args.dde_step)


def _initial(sys_, x0: list[float]):
    if sys_.is_delay:
        if len(x0) != sys_.n:
            raise UsageError(f"{sys_.name} needs {sys_.n} values for a constant history")
        return History.constant(sys_.r, x0)
    if len(x0) != sys_.n:
        raise UsageError(f"{sys_.name} has dimension {sys_.n}, got {len(x0)} initial values")
    return np.asarray(x0, dtype=float)


# -- subcommands ------------------------------------------------------------

def cmd_list_systems(args) -> int:
    _emit(args, {"systems": list_systems(), "certificates": list_presets(),
                 "signals": list(CATALOG)})
    return EXIT_OK


def cmd_simulate(args) -> int:
    sys_ = _system(args)
    traj = integrate(sys_, _initial(sys_, args.x0), _integrator(args))
    if args.csv:
        n, k = traj.states.shape[1], traj.outputs.shape[1]
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{j + 1}" for j in range(k)]
        rows = (np.concatenate([[t], x, y]) for t, x, y in zip(traj.times, traj.states, traj.outputs))
        _write_csv(args.csv, header, ([float(v) for v in r] for r in rows))
    if args.svg:
        from .plotting import trajectory_svg

        trajectory_svg(traj, args.svg)
    _emit(args, {"system": sys_.name, "knots": int(traj.times.size), "t_f": traj.t_f,
                 "final_state": traj.states[-1], "final_output": traj.outputs[-1],
                 "domain_violations": len(traj.domain_violations), "meta": traj.meta})
    return EXIT_OK


def cmd_certify(args) -> int:
    sys_ = _system(args)
    cert = preset(args.cert, sys_)
    if args.target and args.target != cert.target:
        raise UsageError(f"preset {args.cert} certifies {cert.target}, not {args.target}")
    trajs = []
    if args.ntraj > 0:
        cfg = _integrator(args)
        trajs = [integrate(sys_, x, cfg) for x in sample_domain(sys_, args.R, args.ntraj, args.seed + 1)]
    report = check(sys_, cert, R=args.R, N=args.N, trajs=trajs, seed=args.seed)
    _emit(args, report.to_dict())
    return EXIT_OK if report.overall else EXIT_FAIL


def cmd_tconv(args) -> int:
    sys_ = _system(args)
    cert = preset(args.cert, sys_)
    bound = analytic_bound(cert, sys_, args.eps, args.R, N_sup=args.N_sup, seed=args.seed)
    _emit(args, {"T_analytic": bound.T, "bound": bound.as_dict()})
    return EXIT_OK


def _sweep_outputs(args, sys_, rep, cfg) -> None:
    if args.csv:
        width = max((len(np.atleast_1d(_x0_vector(s.x0))) for s in rep.samples), default=0)
        header = ["sample_id"] + [f"x0_{i + 1}" for i in range(width)] + ["T_emp"]
        rows = ([s.id] + [float(v) for v in _x0_vector(s.x0)] + [float(s.T_emp)] for s in rep.samples)
        _write_csv(args.csv, header, rows)
    if args.svg:
        from .plotting import sweep_svg

        states = [_x0_state(sys_, s.x0) for s in rep.samples[:50]]
        sweep_svg([integrate(sys_, x, cfg.with_tf(rep.horizon)) for x in states], rep, args.svg)


def _x0_vector(x0):
    return x0["x0"] if isinstance(x0, dict) else x0


def _x0_state(sys_, x0):
    if isinstance(x0, dict):
        return History.constant(sys_.r, x0["x0"])
    return np.asarray(x0)


def cmd_sweep(args) -> int:
    sys_ = _system(args)
    cert = preset(args.cert, sys_) if args.cert else None
    cfg = _integrator(args)
    rep = uniformity_sweep(sys_, cert, args.eps, args.R, args.N, args.seed, cfg,
                           threads=args.threads, N_sup=args.N_sup)
    _sweep_outputs(args, sys_, rep, cfg)
    _emit(args, rep.to_dict())
    return EXIT_FAIL if rep.verdict == "bound-violated" else EXIT_OK


def cmd_envelope(args) -> int:
    sys_ = _system(args)
    table = envelope(sys_, args.radii, args.times, args.N, args.seed, _integrator(args),
                     threads=args.threads)
    if args.csv:
        header = ["t"] + [f"s={s:g}" for s in table.radii]
        rows = [[float(t)] + [float(v) for v in table.M[i]] for i, t in enumerate(table.times)]
        rows.append(["sup"] + [float(v) for v in table.zeta])
        _write_csv(args.csv, header, rows)
    if args.svg:
        from .plotting import envelope_svg

        envelope_svg(table, args.svg)
    _emit(args, {"envelope": table.to_dict()})
    return EXIT_OK


def _load_signal(args) -> Signal:
    if args.signal in CATALOG:
        return catalog_signal(args.signal, args.dt, args.horizon)
    path = Path(args.signal)
    if not path.is_file():
        raise UsageError(f"{args.signal!r} is neither a catalog signal ({', '.join(CATALOG)}) nor a file")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if "t" not in header or args.column not in header:
        raise UsageError(f"CSV needs columns t and {args.column}; found {header}")
    it, iv = header.index("t"), header.index(args.column)
    t = np.array([float(r[it]) for r in body])
    v = np.array([float(r[iv]) for r in body])
    if args.abs:
        v = np.abs(v)
    # trajectories have adaptive knots; resample onto a uniform grid
    dt = args.dt or float(np.min(np.diff(t)))
    grid = np.arange(t[0], t[-1] + 0.5 * dt, dt)
    grid = grid[grid <= t[-1]]
    return Signal(grid, np.interp(grid, t, v), f"{path.name}:{args.column}")


def cmd_barbalat(args) -> int:
    sig = _load_signal(args)
    rho = parse_comparison(args.rho)
    monotone = {"auto": None, "yes": True, "no": False}[args.rho_monotone]
    rep = lemma3_check(sig, rho, monotone, eps_list=args.eps)
    payload: dict[str, Any] = {"lemma": rep.to_dict()}
    if args.M is not None:
        payload["prop2"] = prop2_check(sig, args.M).to_dict()
    if args.svg:
        from .plotting import signal_svg

        signal_svg(sig, args.svg)
    _emit(args, payload)
    return EXIT_FAIL if rep.conclusion == "contradicted" else EXIT_OK


def cmd_adaptive(args) -> int:
    plant = scalar_demo_plant()
    L = 0.0 if args.scheme == "basic" else args.L
    if args.scheme == "redesigned" and not L > 0:
        raise UsageError("the redesigned scheme needs --L > 0")
    cfg = AdaptiveConfig(gamma=args.gamma, L=L, theta=(args.theta,))
    sys_ = closed_loop(plant, cfg)
    icfg = _integrator(args)
    ok = True
    payload: dict[str, Any] = {"scheme": cfg.scheme}
    assumptions = check_assumptions(plant)
    payload["assumptions"] = {k: v.to_dict() for k, v in assumptions.items()}
    ok &= all(v.verdict for v in assumptions.values())
    cert = None
    if cfg.scheme == "redesigned":
        cert = thm3_certificate(plant, cfg)
        trajs = [integrate(sys_, x, icfg) for x in sample_domain(sys_, args.R, args.ntraj, args.seed + 1)]
        rep = check(sys_, cert, R=args.R, N=args.N, trajs=trajs, seed=args.seed)
        decay = p_decay_check(plant, cfg, trajs)
        payload["certificate"] = rep.to_dict()
        payload["p_decay"] = decay.to_dict()
        ok &= rep.overall and decay.verdict
    else:
        payload["nonuniformity"] = nonuniformity_demo(plant, gamma=cfg.gamma, theta=args.theta,
                                                      eps=args.eps, t_f=args.tf)
    if args.sweep > 0:
        sw = uniformity_sweep(sys_, cert, args.eps, args.R, args.sweep, args.seed, icfg,
                              threads=args.threads, N_sup=args.N_sup)
        payload["sweep"] = sw.to_dict()
        ok &= sw.verdict != "bound-violated"
    if args.svg:
        from .plotting import overlay_svg

        curves = []
        for th in args.thetas:
            c = AdaptiveConfig(gamma=cfg.gamma, L=cfg.L, theta=(th,))
            x0 = initial_state(plant, c, [args.y0], [args.theta_hat0])
            if cfg.L > 0 and not omega_member(plant, c, x0):
                continue
            tr = integrate(closed_loop(plant, c), x0, icfg)
            curves.append((f"theta={th:g}", tr.times, tr.outputs[:, 0]))
        overlay_svg(curves, args.svg)
    _emit(args, payload)
    return EXIT_OK if ok else EXIT_FAIL


# -- parser -----------------------------------------------------------------

def _common(p: argparse.ArgumentParser, system: bool = True) -> None:
    if system:
        p.add_argument("--system", required=True, help="catalog system name (see list-systems)")
        p.add_argument("--param", action="append", type=_param, metavar="KEY=VALUE",
                       help="override a system parameter (repeatable)")
        p.add_argument("--g", default=None, help="bounded nonlinearity: sin, tanh or const:<c>")
    p.add_argument("--rtol", type=float, default=1e-8)
    p.add_argument("--atol", type=float, default=1e-10)
    p.add_argument("--tf", type=float, default=10.0, help="final time")
    p.add_argument("--dde-step", dest="dde_step", type=float, default=0.02)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--json", help="write the JSON report here instead of stdout")
    p.add_argument("--csv")
    p.add_argument("--svg")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="outstab", description="Numerical checks of output-stability certificates")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("list-systems", help="catalog systems, certificate presets and signals")
    p.add_argument("--json")
    p.set_defaults(func=cmd_list_systems)

    p = sub.add_parser("simulate", help="integrate one initial condition")
    _common(p)
    p.add_argument("--x0", type=_floats, required=True, help="initial state (constant history for delays)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("certify", help="check a certificate's hypotheses")
    _common(p)
    p.add_argument("--cert", required=True, help="certificate preset")
    p.add_argument("--target", choices=["thm1", "thm2", "prop1", "cor1", "cor2"])
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--N", type=int, default=200, help="sampled states")
    p.add_argument("--ntraj", type=int, default=5, help="trajectories")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("tconv", help="analytic convergence-time bound")
    _common(p)
    p.add_argument("--cert", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--N-sup", dest="N_sup", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_tconv)

    p = sub.add_parser("sweep", help="empirical convergence times over sampled initial states")
    _common(p)
    p.add_argument("--cert", help="certificate preset for the analytic bound")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--N-sup", dest="N_sup", type=int, default=4096)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("envelope", help="Monte-Carlo output envelopes")
    _common(p)
    p.add_argument("--radii", type=_floats, required=True)
    p.add_argument("--times", type=_floats, required=True)
    p.add_argument("--N", type=int, default=50, help="samples per radius")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("barbalat", help="QUC verdicts and the relaxed Barbalat test for a signal")
    p.add_argument("--signal", required=True, help="catalog signal name or trajectory CSV file")
    p.add_argument("--column", default="y1", help="CSV column to read")
    p.add_argument("--abs", action="store_true", help="use |column| (the test needs f >= 0)")
    p.add_argument("--rho", default="linear:1", help="linear:c, quadratic:c, power:c:p or capped:c:cap")
    p.add_argument("--rho-monotone", dest="rho_monotone", choices=["auto", "yes", "no"], default="auto")
    p.add_argument("--eps", type=_floats, default=list(DEFAULT_EPS))
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--M", type=float, default=None, help="also test f(t) - M t non-increasing")
    p.add_argument("--json")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_barbalat)

    p = sub.add_parser("adaptive", help="adaptive closed loop on the scalar demo plant")
    _common(p, system=False)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--L", type=float, default=2.0)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--scheme", choices=["basic", "redesigned"], default="redesigned")
    p.add_argument("--sweep", type=int, default=0, help="sweep sample count (0 skips the sweep)")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--R", type=float, default=2.0)
    p.add_argument("--N", type=int, default=200)
    p.add_argument("--ntraj", type=int, default=5)
    p.add_argument("--N-sup", dest="N_sup", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--y0", type=float, default=0.5)
    p.add_argument("--theta-hat0", dest="theta_hat0", type=float, default=0.0)
    p.add_argument("--thetas", type=_floats, default=[-1.0, 0.0, 1.0, 2.0])
    p.set_defaults(func=cmd_adaptive)
    return ap


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, OutstabError, ValueError) as exc:
        print(f"outstab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
