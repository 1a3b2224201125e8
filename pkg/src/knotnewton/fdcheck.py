"""Central finite-difference oracles for the assembled derivatives.

The objective is differentiated numerically in ``c`` and ``b``; the Hessian
blocks are compared against differences of the analytic gradients. Valid only
where ``F`` is smooth: breakpoints distinct, inside the interval, and away from
kinks of the coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import assemble
from .model import Network
from .problems import Problem, ProblemKind
from .quadrature import QuadratureSpec

__all__ = ["FDReport", "FDPreconditionError", "fd_check", "fd_gradient", "rel_error",
           "GRAD_TOL", "HESS_TOL"]

GRAD_TOL = 1e-5
HESS_TOL = 1e-4


class FDPreconditionError(ValueError):
    """Raised when finite differences are not meaningful at the given network."""


@dataclass
class FDReport:
    errors: dict

    @property
    def ok(self) -> bool:
        return all(v <= (GRAD_TOL if k.startswith("grad") else HESS_TOL)
                   for k, v in self.errors.items())


def rel_error(approx, exact, floor: float = 1e-8) -> float:
    """Max-norm difference over the max-norm of the larger of the two arrays."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    if approx.size == 0:
        return 0.0
    scale = max(np.max(np.abs(exact)), np.max(np.abs(approx)), floor)
    return float(np.max(np.abs(approx - exact)) / scale)


def _shift(net: Network, block: str, i: int, h: float) -> Network:
    if block == "c":
        c = np.array(net.c)
        c[i] += h
        return net.replace(c=c)
    b = np.array(net.b)
    b[i] += h
    return net.replace(b=b)


def fd_gradient(fn, net: Network, block: str, h: float) -> np.ndarray:
    """Central differences of a scalar or vector valued ``fn(net)`` along one block."""
    size = net.c.size if block == "c" else net.b.size
    cols = []
    for i in range(size):
        plus = np.asarray(fn(_shift(net, block, i, h)), dtype=float)
        minus = np.asarray(fn(_shift(net, block, i, -h)), dtype=float)
        cols.append((plus - minus) / (2 * h))
    return np.array(cols).T if cols else np.zeros((0,))


def _check_preconditions(p: Problem, net: Network, hb: float):
    iv = net.interval
    b = net.b
    if b.size == 0:
        return
    if np.any(~iv.contains_open(b)):
        raise FDPreconditionError("a breakpoint lies outside the open interval")
    pts = np.concatenate(([iv.left], np.sort(b), [iv.right]))
    if np.min(np.diff(pts)) <= 4 * hb:
        raise FDPreconditionError("breakpoints too close for finite differences")
    if p.kind is ProblemKind.DR:
        bad = np.flatnonzero(p.a.at_kink(b, iv))
        if bad.size:
            raise FDPreconditionError(
                f"breakpoint {int(bad[0]) + 1} sits at a kink of a; a' does not exist there")
    kinks = np.asarray(p.kinks(), dtype=float)
    if kinks.size and np.min(np.abs(b[:, None] - kinks[None, :])) <= 4 * hb:
        raise FDPreconditionError("breakpoint within the difference stencil of a coefficient kink")


def fd_check(p: Problem, net: Network, q: QuadratureSpec = QuadratureSpec(),
             hc: float | None = None, hb: float | None = None) -> FDReport:
    """Maximum relative discrepancy of every analytic block against its FD oracle."""
    L = net.interval.length
    hb = 1e-6 * L if hb is None else hb
    hc = 1e-6 * max(1.0, float(np.max(np.abs(net.c)))) if hc is None else hc
    _check_preconditions(p, net, hb)
    sys = assemble(p, net, q)
    F = lambda m: assemble(p, m, q).F_value
    gc = lambda m: assemble(p, m, q).grad_c
    # near a critical point the gradient is O(eps); compare it at the resolution
    # of one difference step instead of dividing rounding noise by ~0
    errors = {
        "grad_c": rel_error(fd_gradient(F, net, "c", hc), sys.grad_c,
                            floor=max(1e-8, hc * float(np.max(np.abs(sys.H11))))),
        "H11": rel_error(fd_gradient(gc, net, "c", hc), sys.H11),
    }
    if net.n:
        gb = lambda m: assemble(p, m, q).grad_b
        errors["grad_b"] = rel_error(fd_gradient(F, net, "b", hb), sys.grad_b,
                                     floor=max(1e-8, hb * float(np.max(np.abs(sys.H22)))))
        # d(grad_c)/db is the (c, b) block; d(grad_b)/db is H22
        errors["H12"] = rel_error(fd_gradient(gc, net, "b", hb), sys.H12)
        errors["H22"] = rel_error(fd_gradient(gb, net, "b", hb), sys.H22)
    return FDReport(errors)
