"""Panel-wise adaptive Gauss-Legendre quadrature.

Integrands handled here are smooth on each panel once the panels are split at
every breakpoint and every declared kink of the coefficient functions. Inside
a panel, sharp layers are resolved by bisection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .model import Network, default_h_floor

__all__ = [
    "QuadratureSpec",
    "QuadratureError",
    "Rule",
    "integrate",
    "composite_rule",
    "merged_panels",
]

log = logging.getLogger(__name__)


class QuadratureError(ArithmeticError):
    def __init__(self, message: str, location=None):
        super().__init__(message if location is None else f"{message} near x={location!r}")
        self.location = location


@dataclass(frozen=True)
class QuadratureSpec:
    base_order: int = 5
    rel_tol: float = 1e-10
    max_depth: int = 30

    def __post_init__(self):
        if self.base_order < 2:
            raise ValueError("base_order must be at least 2")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")


@lru_cache(maxsize=None)
def _gauss(k: int):
    t, w = np.polynomial.legendre.leggauss(k)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


@dataclass(frozen=True)
class Rule:
    """A composite quadrature rule: ``sum(weights * f(nodes))``.

    ``exhausted`` lists midpoints of panels accepted only because the bisection
    depth ran out.
    """

    nodes: np.ndarray
    weights: np.ndarray
    exhausted: tuple = field(default=())

    def __call__(self, values) -> float:
        return float(np.sum(self.weights * values))


def _panel_nodes(a, b, k):
    """Gauss nodes/weights on each panel ``[a_j, b_j]``, shape ``(m, k)``."""
    t, w = _gauss(k)
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    return mid[:, None] + half[:, None] * t, half[:, None] * w


def _eval_all(fns, x):
    flat = x.reshape(-1)
    vals = []
    for fn in fns:
        v = np.asarray(fn(flat), dtype=float)
        if v.shape != flat.shape:
            v = np.broadcast_to(v, flat.shape)
        if not np.all(np.isfinite(v)):
            bad = flat[~np.isfinite(v)][0]
            raise QuadratureError("non-finite integrand value", float(bad))
        vals.append(v.reshape(x.shape))
    return vals


def composite_rule(fns, panels, spec: QuadratureSpec = QuadratureSpec(), floors=None) -> Rule:
    """Refine ``panels`` until every function in ``fns`` is resolved.

    On each panel the ``k``-point and ``(2k+1)``-point Gauss estimates are
    compared (``k = spec.base_order``). A panel is accepted when, for every
    function, they agree to ``rel_tol`` times the larger of the finer estimate
    and that panel's share of the total ``int |f|``; the share floor stops
    refinement at zero crossings and where ``f`` is negligible. Rejected panels
    are bisected. The returned rule is the ``(2k+1)``-point rule on every
    accepted panel.

    ``floors`` optionally gives, per function, a lower bound on its ``int |f|``
    scale. An integrand that is pure rounding noise (an error that vanishes up
    to round-off) otherwise never passes the test and refines to ``max_depth``
    everywhere.
    """
    panels = np.asarray(panels, dtype=float)
    if panels.ndim != 1 or panels.size < 2 or np.any(np.diff(panels) < 0):
        raise ValueError("panels must be a sorted sequence of at least two points")
    total = panels[-1] - panels[0]
    k = spec.base_order
    lo, hi = panels[:-1], panels[1:]
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    depth = 0
    scale = None
    acc_lo, acc_hi, exhausted = [], [], []
    while lo.size:
        xc, wc = _panel_nodes(lo, hi, k)
        xf, wf = _panel_nodes(lo, hi, 2 * k + 1)
        vc = _eval_all(fns, xc)
        vf = _eval_all(fns, xf)
        if scale is None:
            scale = [float(np.sum(wf * np.abs(v))) for v in vf]
            if floors is not None:
                scale = [max(s, float(fl)) for s, fl in zip(scale, floors)]
        ok = np.ones(lo.size, dtype=bool)
        share = (hi - lo) / total
        for fc, ff, s in zip(vc, vf, scale):
            coarse = np.sum(wc * fc, axis=1)
            fine = np.sum(wf * ff, axis=1)
            tol = spec.rel_tol * np.maximum(np.abs(fine), s * share)
            ok &= np.abs(fine - coarse) <= tol
        mid = 0.5 * (lo + hi)
        if depth >= spec.max_depth:
            if not ok.all():
                exhausted.extend(mid[~ok].tolist())
            ok[:] = True
        acc_lo.append(lo[ok])
        acc_hi.append(hi[ok])
        lo, mid, hi = lo[~ok], mid[~ok], hi[~ok]
        lo, hi = np.concatenate((lo, mid)), np.concatenate((mid, hi))
        depth += 1
    lo = np.concatenate(acc_lo)
    hi = np.concatenate(acc_hi)
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    x, w = _panel_nodes(lo, hi, 2 * k + 1)
    if exhausted:
        log.debug("quadrature depth exhausted on %d panels, first near %r",
                  len(exhausted), exhausted[0])
    return Rule(x.reshape(-1), w.reshape(-1), tuple(exhausted))


def integrate(fn, panels, spec: QuadratureSpec = QuadratureSpec(), full_output: bool = False):
    """Integrate ``fn`` (vectorized) over the span of ``panels``.

    With ``full_output`` the result is ``(value, rule)``; ``rule.exhausted`` is
    non-empty when some panel hit the depth cap, in which case ``value`` is
    still the best available estimate.
    """
    rule = composite_rule([fn], panels, spec)
    values = _eval_all([fn], rule.nodes)[0]
    value = rule(values)
    if full_output:
        return value, rule
    return value


def merged_panels(net: Network, extra_kinks=(), h_floor: float | None = None) -> np.ndarray:
    """Sorted union of the interval ends, the breakpoints and ``extra_kinks``.

    Points outside the closed interval are dropped and points closer than
    ``h_floor / 2`` are merged, so every network and coefficient function is
    smooth on each open panel.
    """
    iv = net.interval
    if h_floor is None:
        h_floor = default_h_floor(iv)
    pts = np.concatenate((net.b, np.asarray(extra_kinks, dtype=float).reshape(-1)))
    pts = pts[(pts > iv.left) & (pts < iv.right)]
    pts = np.sort(np.concatenate(([iv.left], pts, [iv.right])))
    keep = np.concatenate(([True], np.diff(pts) > 0.5 * h_floor))
    pts = pts[keep]
    if pts[-1] != iv.right:
        pts[-1] = iv.right
    return pts
