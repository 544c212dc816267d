"""Command-line interface: ``slowfast {analyze,simulate,verify,catalog}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import models, simulate
from .config import ConfigError, dump_config, load_config
from .entry_exit import AssumptionViolation, NoExit
from .ode import IntegrationError, StepUnderflow
from .orbit import NewtonFailure, find_singular_orbit
from .system import check_assumptions

EXIT_OK, EXIT_USAGE, EXIT_ASSUMPTIONS, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("slowfast")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _load(source):
    """Config from a file path, or a catalog name when no such file exists."""
    if not Path(source).exists() and source in models.names():
        return load_config(models.get(source).export())
    if not Path(source).exists():
        raise ConfigError("/", f"no such file: {source}")
    return load_config(source)


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _write_text(text, path):
    fh, close = _open_out(path)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()


def _mat(a):
    return np.asarray(a, dtype=float).tolist()


def _complex(z):
    return {"re": float(np.real(z)), "im": float(np.imag(z))}


def build_report(cfg, orbit, stab, assumptions):
    """JSON-ready dict for an analysis run."""
    return {
        "name": cfg.name,
        "orbit": {
            "A": [_mat(a) for a in orbit.A],
            "B": [_mat(b) for b in orbit.B],
            "tau": [float(t) for t in orbit.tau],
            "zeta": [_mat(z) for z in orbit.zeta],
            "residual": float(orbit.residual),
            "iterations": int(orbit.iterations),
        },
        "jacobians": {
            "DQ": [_mat(lj.DQ) for lj in stab.leg_jacobians],
            "DQhat": [_mat(lj.DQhat) for lj in stab.leg_jacobians],
            "Dpi": [_mat(jj.Dpi) for jj in stab.jump_jacobians],
            "DP": _mat(stab.DP),
        },
        "eigenvalues": [_complex(z) for z in stab.eigenvalues],
        "spectral_radius": float(stab.spectral_radius),
        "det_DP_minus_I": float(stab.det_DP_minus_I),
        "classification": stab.classification,
        "assumption_report": assumptions.to_dict(),
    }


def _tol(args, cfg):
    return (args.rtol if args.rtol is not None else cfg.rtol,
            args.atol if args.atol is not None else cfg.atol)


def _solve(cfg, args):
    rtol, atol = _tol(args, cfg)
    return find_singular_orbit(cfg.system, cfg.chain, tol=cfg.newton, rtol=rtol, atol=atol,
                               jump_method=getattr(args, "jump_method", "regularized"))


def cmd_analyze(args):
    cfg = _load(args.config)
    pre = check_assumptions(cfg.system, cfg.chain)
    if not pre.passed:
        _write_text(json.dumps({"name": cfg.name, "assumption_report": pre.to_dict()}, indent=2) + "\n", args.out)
        log.error("assumptions failed before the orbit search")
        return EXIT_ASSUMPTIONS
    try:
        orbit, stab = _solve(cfg, args)
    except NewtonFailure as e:
        cause = e.__cause__
        if isinstance(cause, (NoExit, AssumptionViolation)):
            log.error("assumptions fail at the initial guess: %s", cause)
            return EXIT_ASSUMPTIONS
        log.error("%s", e)
        return EXIT_SOLVER
    except (NoExit, AssumptionViolation) as e:
        log.error("%s", e)
        return EXIT_ASSUMPTIONS
    except IntegrationError as e:
        log.error("%s", e)
        return EXIT_SOLVER
    rtol, atol = _tol(args, cfg)
    post = check_assumptions(cfg.system, cfg.chain, orbit=orbit, rtol=rtol, atol=atol)
    _write_text(json.dumps(build_report(cfg, orbit, stab, post), indent=2) + "\n", args.out)
    return EXIT_OK if post.passed else EXIT_ASSUMPTIONS


def _check_eps(eps):
    if not eps > 0:
        raise UsageError("eps must be positive; use 'analyze' for the eps = 0 limit")


def _column_names(cfg):
    sys_ = cfg.system
    slow = list(sys_.slow_vars) or [f"p_{i + 1}" for i in range(sys_.n)]
    fast = list(sys_.fast_vars) or [f"z_{j + 1}" for j in range(sys_.m)]
    return ["tau", *slow, *fast]


def cmd_simulate(args):
    cfg = _load(args.config)
    _check_eps(args.eps)
    size = cfg.system.n + cfg.system.m
    if len(args.init) != size:
        raise UsageError(f"--init needs {size} values")
    try:
        traj = simulate.run(cfg.system, args.eps, args.init, args.tmax, args.rtol, args.atol)
    except ValueError as e:
        raise UsageError(str(e)) from None
    except StepUnderflow as e:
        log.error("%s; try reducing eps gradually", e)
        return EXIT_SOLVER
    except IntegrationError as e:
        log.error("%s", e)
        return EXIT_SOLVER
    if args.samples:
        t = np.linspace(traj.t[0], traj.t[-1], args.samples)
        rows = np.column_stack([t, traj(t)])
    else:
        rows = np.column_stack([traj.t, traj.y])
    fh, close = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_column_names(cfg))
        w.writerows([["%.17g" % v for v in row] for row in rows])
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_verify(args):
    cfg = _load(args.config)
    for eps in args.eps_list:
        _check_eps(eps)
    try:
        orbit, _ = _solve(cfg, args)
    except NewtonFailure as e:
        log.error("%s", e)
        return EXIT_SOLVER
    init = args.init if args.init else simulate.default_init(cfg.system, cfg.chain, orbit)
    if len(init) != cfg.system.n + cfg.system.m:
        raise UsageError(f"--init needs {cfg.system.n + cfg.system.m} values")
    try:
        rows = simulate.convergence_study(cfg.system, cfg.chain, orbit, args.eps_list, init,
                                          t_max=args.tmax, t_burn=args.tburn)
    except (simulate.CycleNotFound, IntegrationError) as e:
        log.error("%s", e)
        return EXIT_SOLVER
    except ValueError as e:
        raise UsageError(str(e)) from None
    fh, close = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "hausdorff_distance", "cycle_period"])
        w.writerows([[repr(float(r.eps)), "%.17g" % r.distance, "%.17g" % r.period] for r in rows])
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_catalog(args):
    if args.export is None:
        for entry in models.catalog():
            print(f"{entry.name}\t{entry.description}")
        return EXIT_OK
    try:
        entry = models.get(args.export)
    except KeyError:
        raise UsageError(f"unknown model {args.export!r}; known: {', '.join(models.names())}") from None
    out = args.out if args.out is not None else f"{entry.name}.json"
    _write_text(dump_config(entry.export()), out)
    if out != "-":
        log.info("wrote %s", out)
    return EXIT_OK


def _add_tol(p):
    p.add_argument("--rtol", type=float, default=None, help="integration rtol (default from config)")
    p.add_argument("--atol", type=float, default=None, help="integration atol (default from config)")


def build_parser():
    parser = _Parser(prog="slowfast", description="Entry-exit analysis of slow-fast systems.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="find the singular orbit and classify it")
    p.add_argument("config", help="config file (or a catalog name)")
    p.add_argument("--out", default="-", help="report path, '-' for stdout")
    p.add_argument("--jump-method", choices=("regularized", "seeded"), default="regularized")
    _add_tol(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="integrate the eps > 0 system, write CSV")
    p.add_argument("config")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--init", type=_floats, required=True, help="comma-separated p then z")
    p.add_argument("--tmax", type=float, default=200.0)
    p.add_argument("--samples", type=int, default=0, help="resample to this many equally spaced times")
    p.add_argument("--rtol", type=float, default=1e-9)
    p.add_argument("--atol", type=float, default=1e-11)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="distance of finite-eps cycles to the singular orbit")
    p.add_argument("config")
    p.add_argument("--eps-list", type=_floats, required=True)
    p.add_argument("--init", type=_floats, default=None)
    p.add_argument("--tmax", type=float, default=200.0)
    p.add_argument("--tburn", type=float, default=None)
    p.add_argument("--out", default="-")
    _add_tol(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("catalog", help="list or export the built-in models")
    p.add_argument("--export", metavar="NAME")
    p.add_argument("--out", default=None, help="export path (default NAME.json, '-' for stdout)")
    p.set_defaults(func=cmd_catalog)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        # downstream reader closed early (e.g. ``| head``); not an error
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
