"""Command line front-end: ``knotnewton run|check|certify|error``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from .assembly import assemble
from .config import ConfigError, RunConfig, load_config
from .fdcheck import GRAD_TOL, HESS_TOL, FDPreconditionError, fd_check
from .model import Network
from .solver import Scheme, SolverError, classify, linear_solve, run

log = logging.getLogger("knotnewton")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_PRECONDITION = 3
EXIT_FAILED = 4
EXIT_ZERO_COEF = 5

EXIT_HELP = """exit codes:
  0  success
  1  bad config, bad arguments or unreadable input
  2  solver aborted (factorization failure); partial trace still written
  3  precondition refused (e.g. finite differences at a kink of a)
  4  check or certificate failed (tolerance exceeded, not SPD, or sigma >= 1)
  5  certificate inapplicable: some active c_i is zero
"""


def _emit(args, text):
    if not args.quiet:
        print(text)


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.iters is not None:
        overrides["max_iters"] = args.iters
    if args.scheme is not None:
        overrides["scheme"] = args.scheme
    if overrides:
        try:
            cfg.solver = replace(cfg.solver, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return cfg


def _start(cfg: RunConfig) -> Network:
    net = cfg.initial_network()
    if cfg.init_network is None:
        # uniform init: coefficients come from the first c-solve
        net = linear_solve(cfg.problem, net, cfg.quadrature)
    return net


def _load_network(path, cfg: RunConfig) -> Network:
    try:
        net = Network.from_json(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad network file {path}: {exc}") from None
    if net.interval != cfg.problem.interval:
        raise ConfigError("network interval differs from the problem interval")
    return net


def _write(path, text):
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


# -- certification ---------------------------------------------------------------

class ZeroCoefficient(ValueError):
    def __init__(self, index):
        super().__init__(f"c_{index} = 0 for an active neuron; certificate inapplicable")
        self.index = index


def certificate_report(cfg: RunConfig, net: Network) -> dict:
    """SPD checks, condition margins and contraction factors at ``net``.

    The Hessian is restricted to the ``c`` block and the breakpoints in ``S``,
    the coordinates the reduced iteration actually updates.
    """
    p = cfg.problem
    sys_ = assemble(p, net, cfg.quadrature)
    rep = classify(p, net, sys_, cfg.solver)
    S = np.asarray(rep.S, dtype=int)
    for i in S:
        if net.c[i] == 0.0:
            raise ZeroCoefficient(int(i))
    n_c = net.n + 1
    keep = np.concatenate((np.arange(n_c), n_c + S - 1))
    A = sys_.hessian()[np.ix_(keep, keep)]
    H11 = sys_.H11
    H22 = sys_.H22[np.ix_(S - 1, S - 1)]
    spd_full = analysis.spd_check(A)
    blocks = [analysis.spd_check(H11, analysis.CertificateKind.SPD_BLOCKS)]
    if S.size:
        blocks.append(analysis.spd_check(H22, analysis.CertificateKind.SPD_BLOCKS))
    jacobi = analysis.spd_check(analysis.jacobi_matrix(A, n_c), analysis.CertificateKind.JACOBI_SPD)
    if S.size:
        cond = analysis.theorem_condition(p, net, sys_, indices=S).to_dict()
    else:
        cond = None
    sigmas = {}
    for scheme in Scheme:
        try:
            sigmas[scheme] = analysis.contraction_factor(A, scheme, n_c) if spd_full.verdict else None
        except np.linalg.LinAlgError:
            sigmas[scheme] = None
    return analysis._jsonable({
        "spd_full": spd_full.to_dict(),
        "spd_blocks": {"verdict": all(b.verdict for b in blocks), "blocks": [b.to_dict() for b in blocks]},
        "condition_margins": cond,
        "sigma_nlgs": sigmas[Scheme.NLGS],
        "sigma_lgs": sigmas[Scheme.LGS],
        "sigma_jb": sigmas[Scheme.JB],
        "jacobi_spd": jacobi.to_dict(),
        "S": S.tolist(),
        "S1": list(rep.S1),
        "S2": list(rep.S2),
    })


def _fmt(v):
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6g}"


# -- commands ----------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = _load(args)
    p = cfg.problem
    sc = cfg.solver
    log.info("scheme=%s damping=%s seed=%d max_iters=%d gamma=%g", sc.scheme.value,
             sc.damping.value, sc.seed, sc.max_iters, p.penalty(cfg.initial_network().n))
    try:
        net0 = _start(cfg)
        net, trace = run(p, net0, sc, cfg.quadrature)
    except SolverError as exc:
        if exc.trace is not None:
            _write(cfg.trace_csv, exc.trace.to_csv())
        print(f"solver aborted: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _write(cfg.trace_csv, trace.to_csv())
    _write(cfg.final_json, net.to_json() + "\n")
    last = trace.records[-1]
    parts = [f"iters={last['k']}", f"F={last['F']:.10g}", f"relH1={_fmt(last['relH1err'])}"]
    if cfg.certify:
        try:
            report = certificate_report(cfg, net)
            sigma = report[f"sigma_{cfg.solver.scheme.value}"]
            parts.append(f"sigma={_fmt(sigma)}")
        except ZeroCoefficient:
            parts.append("sigma=n/a")
    _emit(args, " ".join(parts))
    return EXIT_OK


def cmd_check(args) -> int:
    cfg = _load(args)
    try:
        net = _start(cfg)
        report = fd_check(cfg.problem, net, cfg.quadrature)
    except FDPreconditionError as exc:
        print(f"check refused: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except SolverError as exc:
        print(f"initial c-solve failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for name, err in report.errors.items():
        tol = GRAD_TOL if name.startswith("grad") else HESS_TOL
        _emit(args, f"{name:7s} max_rel_err={err:.3e} tol={tol:g} {'ok' if err <= tol else 'FAIL'}")
    return EXIT_OK if report.ok else EXIT_FAILED


def cmd_certify(args) -> int:
    cfg = _load(args)
    net = _load_network(args.network, cfg)
    try:
        report = certificate_report(cfg, net)
    except ZeroCoefficient as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ZERO_COEF
    _emit(args, json.dumps(report, indent=2))
    sigma = report[f"sigma_{cfg.solver.scheme.value}"]
    good = report["spd_full"]["verdict"] and sigma is not None and sigma < 1
    return EXIT_OK if good else EXIT_FAILED


def cmd_error(args) -> int:
    cfg = _load(args)
    net = _load_network(args.network, cfg)
    if cfg.problem.target_u is None:
        print("problem has no exact solution", file=sys.stderr)
        return EXIT_CONFIG
    _emit(args, json.dumps(analysis.error_norms(cfg.problem, net, cfg.quadrature)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override the solver seed")
    common.add_argument("--iters", type=int, help="override max_iters")
    common.add_argument("--scheme", choices=[s.value for s in Scheme], help="override the scheme")
    common.add_argument("--quiet", action="store_true", help="print nothing on success")

    parser = argparse.ArgumentParser(
        prog="knotnewton",
        description="Block Newton solvers for shallow ReLU networks in one dimension.",
        epilog=EXIT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run the configured solve")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("check", parents=[common], help="finite-difference check at the initial network")
    p.add_argument("config")
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("certify", parents=[common], help="local convergence certificate for a network")
    p.add_argument("config")
    p.add_argument("network")
    p.set_defaults(func=cmd_certify)
    p = sub.add_parser("error", parents=[common], help="error norms of a network against the exact solution")
    p.add_argument("config")
    p.add_argument("network")
    p.set_defaults(func=cmd_error)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
