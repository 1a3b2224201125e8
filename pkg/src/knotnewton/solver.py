"""Block Newton outer iterations and the reduced variant with neuron bookkeeping.

Each step solves the ``c`` block exactly, then takes a Newton step in the
breakpoints restricted to the active index set ``S``. Neurons with negligible
coefficients (``S1``) are skipped and eventually moved to a random mesh
midpoint; neurons that should not move (``S2``) are skipped.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import linalg
from .analysis import error_norms
from .assembly import AssembledSystem, assemble
from .model import Network, canonical_order, default_h_floor
from .problems import Problem, ProblemKind
from .quadrature import QuadratureSpec

__all__ = [
    "Scheme",
    "Damping",
    "Reason",
    "SolverConfig",
    "ReductionReport",
    "IterationTrace",
    "SolverState",
    "SolverError",
    "classify",
    "reduced_direction",
    "block_update",
    "mesh_guard",
    "redistribute",
    "linear_solve",
    "step_nlgs",
    "step_lgs",
    "step_jacobi",
    "step",
    "run",
    "TRACE_HEADER",
]

log = logging.getLogger(__name__)

TRACE_HEADER = ("k", "F", "gnorm_c", "gnorm_b", "S1", "S2", "step_c", "step_b", "relH1err")


class Scheme(enum.Enum):
    NLGS = "nlgs"
    LGS = "lgs"
    JB = "jb"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("-", ""))
        except ValueError:
            raise ValueError(f"unknown scheme {value!r}; use nlgs, lgs or jb") from None


class Damping(enum.Enum):
    NONE = "none"
    MESH_GUARD = "mesh_guard"


class Reason(enum.Enum):
    ACTIVE = "active"
    FROZEN = "frozen"
    SMALL_C = "small_c"
    OUTSIDE = "outside"
    FLAT_G = "flat_g"
    KINK = "kink"
    NEGATIVE_CURVATURE = "negative_curvature"


class SolverError(RuntimeError):
    def __init__(self, message, trace=None, pivot=None):
        super().__init__(message)
        self.trace = trace
        self.pivot = pivot


@dataclass(frozen=True)
class SolverConfig:
    scheme: Scheme = Scheme.NLGS
    max_iters: int = 100
    grad_tol: float = 1e-10
    tau1: float = 1e-6
    tau2: float = 1e-8
    tau3: float = 0.1
    seed: int = 0
    damping: Damping = Damping.MESH_GUARD
    gauss_newton_fallback: bool = True
    frozen: frozenset = frozenset()
    redistribute_after: int = 3

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        object.__setattr__(self, "damping", Damping(getattr(self.damping, "value", self.damping)))
        object.__setattr__(self, "frozen", frozenset(int(i) for i in self.frozen))
        if not 0 <= self.tau1 < 1:
            raise ValueError("tau1 must lie in [0, 1)")
        if not 0 <= self.tau2 < 1:
            raise ValueError("tau2 must lie in [0, 1)")
        if not 0 < self.tau3 < 1:
            raise ValueError("tau3 must lie in (0, 1)")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if self.redistribute_after < 1:
            raise ValueError("redistribute_after must be at least 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if any(i < 1 for i in self.frozen):
            raise ValueError("frozen indices are 1-based")


@dataclass(frozen=True)
class ReductionReport:
    """Index sets (1-based neuron labels) and per-neuron evidence."""

    S1: tuple
    S2: tuple
    S: tuple
    frozen: tuple = ()
    evidence: tuple = ()
    step_c: float = 0.0
    step_b: float = 0.0
    damping: float = 1.0
    redistributed: tuple = ()
    used_fallback: bool = False


@dataclass
class SolverState:
    """Per-neuron bookkeeping carried across iterations (reordered with the neurons)."""

    streak: np.ndarray
    frozen: np.ndarray
    iteration: int = 0

    @classmethod
    def fresh(cls, n: int, frozen=()) -> "SolverState":
        mask = np.zeros(n, dtype=bool)
        for i in frozen:
            if not 1 <= i <= n:
                raise ValueError(f"frozen index {i} out of range 1..{n}")
            mask[i - 1] = True
        return cls(np.zeros(n, dtype=int), mask)


# -- classification and directions --------------------------------------------

def classify(p: Problem, net: Network, sys: AssembledSystem, cfg: SolverConfig,
             frozen_mask=None) -> ReductionReport:
    """Split the unfrozen neurons into ``S1`` (skip, maybe redistribute), ``S2`` (skip) and ``S``."""
    n = net.n
    frozen = np.zeros(n, dtype=bool) if frozen_mask is None else np.asarray(frozen_mask, bool)
    if frozen_mask is None:
        for i in cfg.frozen:
            if i <= n:
                frozen[i - 1] = True
    c_hat = net.c[1:]
    scale = max(1.0, float(np.max(np.abs(net.c)))) if net.c.size else 1.0
    inside = net.interval.contains_open(net.b)
    S1, S2, S, evidence = [], [], [], []
    for j in range(n):
        label = j + 1
        ci = float(c_hat[j])
        gi = float(sys.g[j])
        ev = {"index": label, "abs_c": abs(ci), "inside": bool(inside[j])}
        if frozen[j]:
            ev["reason"] = Reason.FROZEN
        elif not inside[j]:
            ev["reason"] = Reason.OUTSIDE
            S1.append(label)
        elif abs(ci) / scale < cfg.tau1:
            ev["reason"] = Reason.SMALL_C
            S1.append(label)
        elif p.kind is ProblemKind.DR:
            ratio = abs(gi) / float(sys.a_at_b[j]) if not sys.g_undefined[j] else math.nan
            ev["g_over_a"] = ratio
            if sys.g_undefined[j]:
                ev["reason"] = Reason.KINK
                S2.append(label)
            elif ratio <= cfg.tau2:
                ev["reason"] = Reason.FLAT_G
                S2.append(label)
            else:
                ev["reason"] = Reason.ACTIVE
                S.append(label)
        else:
            # c_i = 0 only reaches here with tau1 = 0; the ratio is then undefined
            ratio = gi / ci if ci != 0.0 else math.nan
            ev["g_over_c"] = ratio
            if ratio < 0 and abs(ci) < cfg.tau3 * abs(gi):
                ev["reason"] = Reason.NEGATIVE_CURVATURE
                S2.append(label)
            else:
                ev["reason"] = Reason.ACTIVE
                S.append(label)
        evidence.append(ev)
    return ReductionReport(tuple(S1), tuple(S2), tuple(S),
                           tuple(int(i) + 1 for i in np.flatnonzero(frozen)), tuple(evidence))


def _solve_b(H22, rhs, sel, fallback_matrix=None, fallback=True):
    """Newton system on the selected rows; returns (direction_on_sel, used_fallback)."""
    if sel.size == 0:
        return np.zeros(0), False
    r = rhs[sel]
    if not np.any(r):
        return np.zeros(sel.size), False
    H = H22[np.ix_(sel, sel)]
    try:
        return -linalg.indefinite_solve(H, r, require_positive=fallback), False
    except linalg.FactorizationError as exc:
        if not fallback or fallback_matrix is None:
            raise SolverError(f"reduced b-system factorization failed: {exc}",
                              pivot=None if exc.pivot is None else int(sel[exc.pivot]) + 1) from None
        first = exc
    G = fallback_matrix[np.ix_(sel, sel)]
    try:
        return -linalg.indefinite_solve(G, r, require_positive=True), True
    except linalg.FactorizationError as exc:
        pivot = exc.pivot if exc.pivot is not None else first.pivot
        raise SolverError(f"reduced b-system and Gauss-Newton fallback both failed: {exc}",
                          pivot=None if pivot is None else int(sel[pivot]) + 1) from None


def reduced_direction(sys: AssembledSystem, S, cfg: SolverConfig, rhs=None) -> np.ndarray:
    """Newton direction in ``b`` on the index set ``S`` (1-based), zero elsewhere.

    The restricted ``H22`` is factored as ``L D L^T``; when it is singular or
    indefinite and the fallback is enabled, the Gauss-Newton matrix is used.
    """
    n = sys.n
    sel = np.asarray(sorted(S), dtype=int) - 1
    rhs = sys.grad_b if rhs is None else np.asarray(rhs, dtype=float)
    p = np.zeros(n)
    if sel.size:
        G = sys.gauss_newton_22(sys.c[1:]) if cfg.gauss_newton_fallback else None
        p[sel], _ = _solve_b(sys.H22, rhs, sel, G, cfg.gauss_newton_fallback)
    return p


def block_update(scheme, c, b, oracle, select=None, fallback=None):
    """One block Newton update on raw parameter arrays.

    ``oracle(c, b)`` returns an object with ``grad_c, grad_b, H11, H12, H22``.
    ``select(sys, c)`` returns the 0-based indices of ``b`` to update (default:
    all); ``fallback(sys, c)`` optionally returns a replacement ``H22`` used
    when the restricted system cannot be factored. Returns
    ``(c_new, b_new, dc, db, sys_b)`` where ``sys_b`` is the assembly the
    ``b``-step used.
    """
    scheme = Scheme.parse(scheme)
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float)
    sys0 = oracle(c, b)
    if hasattr(sys0, "newton_c"):
        dc = sys0.newton_c()
    else:
        dc = -linalg.spd_solve(sys0.H11, sys0.grad_c)
    c_new = c + dc
    if scheme is Scheme.NLGS:
        sys_b = oracle(c_new, b)
        rhs = sys_b.grad_b
    else:
        sys_b = sys0
        rhs = sys0.grad_b + (sys0.H12.T @ dc if scheme is Scheme.LGS else 0.0)
    sel = np.arange(b.size) if select is None else np.asarray(select(sys_b, c_new), dtype=int)
    G = None if fallback is None else fallback(sys_b, c_new)
    db = np.zeros(b.size)
    used = False
    if sel.size:
        db[sel], used = _solve_b(sys_b.H22, rhs, sel, G, fallback is not None)
    return c_new, b + db, dc, db, sys_b, used


def mesh_guard(net: Network, p: np.ndarray) -> float:
    """Global step factor ``lambda`` that keeps breakpoints ordered and inside.

    ``lambda = min(1, t/2)`` where ``t`` is the first step length at which any
    gap (endpoints included) would close, so no gap shrinks by more than half.
    """
    iv = net.interval
    pts = np.concatenate(([iv.left], net.b, [iv.right]))
    dp = np.concatenate(([0.0], p, [0.0]))
    gap = np.diff(pts)
    rate = np.diff(dp)
    closing = rate < 0
    if not np.any(closing):
        return 1.0
    t = np.min(np.maximum(gap[closing], 0.0) / -rate[closing])
    return float(min(1.0, 0.5 * t))


def redistribute(net: Network, S1, rng, state: SolverState | None = None) -> Network:
    """Move each neuron in ``S1`` (1-based) to the midpoint of a random mesh cell.

    The cell is drawn uniformly among the cells cut by the current breakpoints
    that lie inside the interval (``n + 1`` cells when all of them do); the moved neuron's coefficient is reset
    to zero. The result is canonicalized, and ``state`` is reordered to match.
    """
    if not len(S1):
        return net
    c = np.array(net.c)
    b = np.array(net.b)
    iv = net.interval
    for label in sorted(S1):
        inner = b[iv.contains_open(b)]
        pts = np.sort(np.concatenate(([iv.left], inner, [iv.right])))
        m = int(rng.integers(1, pts.size))
        b[label - 1] = 0.5 * (pts[m - 1] + pts[m])
        c[label] = 0.0
        if state is not None:
            state.streak[label - 1] = 0
    c, b, perm = canonical_order(c, b, iv)
    if state is not None:
        state.streak = state.streak[perm]
        state.frozen = state.frozen[perm]
    return Network(iv, net.alpha, c, b)


def linear_solve(p: Problem, net: Network, q: QuadratureSpec = QuadratureSpec(),
                 sys: AssembledSystem | None = None) -> Network:
    """Exact minimization in ``c`` with ``b`` fixed (one Newton step, ``F`` is quadratic in ``c``)."""
    sys = assemble(p, net, q) if sys is None else sys
    try:
        dc = sys.newton_c()
    except linalg.FactorizationError as exc:
        raise SolverError(f"H11 factorization failed (mesh collapse?): {exc}") from None
    return net.replace(c=net.c + dc)


# -- steps ---------------------------------------------------------------------

def _rng(cfg: SolverConfig, iteration: int):
    return np.random.default_rng([int(cfg.seed), int(iteration)])


def _step(scheme: Scheme, p: Problem, net: Network, q: QuadratureSpec, cfg: SolverConfig,
          state: SolverState | None = None, sys: AssembledSystem | None = None):
    state = SolverState.fresh(net.n, cfg.frozen) if state is None else state
    cache = {}

    def oracle(c, b):
        key = (c.tobytes(), b.tobytes())
        if key not in cache:
            if sys is not None and np.array_equal(c, net.c) and np.array_equal(b, net.b):
                cache[key] = sys
            else:
                cache[key] = assemble(p, Network(net.interval, net.alpha, c, b), q)
        return cache[key]

    reports = {}

    def select(sys_b, c_new):
        report = classify(p, Network(net.interval, net.alpha, c_new, net.b), sys_b, cfg, state.frozen)
        reports["r"] = report
        return np.asarray(report.S, dtype=int) - 1

    def fallback(sys_b, c_new):
        return sys_b.gauss_newton_22(c_new[1:]) if cfg.gauss_newton_fallback else None

    try:
        c_new, _, dc, db, _, used = block_update(
            scheme, net.c, net.b, oracle, select,
            fallback if cfg.gauss_newton_fallback else None)
    except linalg.FactorizationError as exc:
        raise SolverError(f"H11 factorization failed (mesh collapse?): {exc}") from None
    report = reports["r"]
    lam = 1.0
    if cfg.damping is Damping.MESH_GUARD and np.any(db):
        lam = mesh_guard(net, db)
        db = lam * db
    moved = Network(net.interval, net.alpha, c_new, net.b + db)

    # S1 bookkeeping: redistribute persistent or escaped members
    in_s1 = np.zeros(net.n, dtype=bool)
    in_s1[np.asarray(report.S1, dtype=int) - 1] = True
    state.streak = np.where(in_s1, state.streak + 1, 0)
    # a breakpoint that left the interval is in S1 at the new point regardless
    # of how it was classified before the move; its ramp is useless there
    outside = moved.outside
    due = [j + 1 for j in range(net.n)
           if ((in_s1[j] and state.streak[j] >= cfg.redistribute_after) or outside[j])
           and not state.frozen[j]]
    c2, b2, perm = canonical_order(moved.c, moved.b, net.interval)
    state.streak = state.streak[perm]
    state.frozen = state.frozen[perm]
    moved = Network(net.interval, net.alpha, c2, b2)
    due = sorted(int(np.flatnonzero(perm == j - 1)[0]) + 1 for j in due)
    if due:
        moved = redistribute(moved, due, _rng(cfg, state.iteration), state)
    state.iteration += 1
    report = replace(report, step_c=float(np.linalg.norm(dc)), step_b=float(np.linalg.norm(db)),
                     damping=lam, redistributed=tuple(due), used_fallback=used)
    return moved, report


def step_nlgs(p, net, q=QuadratureSpec(), cfg=SolverConfig(), state=None, sys=None):
    """Nonlinear Gauss-Seidel: c-solve, then the b-step assembled at the new ``c``."""
    return _step(Scheme.NLGS, p, net, q, cfg, state, sys)


def step_lgs(p, net, q=QuadratureSpec(), cfg=SolverConfig(), state=None, sys=None):
    """Linear Gauss-Seidel: one assembly; ``H22 db = -(grad_b + H21 dc)``."""
    return _step(Scheme.LGS, p, net, q, cfg, state, sys)


def step_jacobi(p, net, q=QuadratureSpec(), cfg=SolverConfig(), state=None, sys=None):
    """Jacobi: both blocks solved independently from one assembly."""
    return _step(Scheme.JB, p, net, q, cfg, state, sys)


def step(p, net, q=QuadratureSpec(), cfg=SolverConfig(), state=None, sys=None):
    return _step(cfg.scheme, p, net, q, cfg, state, sys)


# -- driver ----------------------------------------------------------------------

@dataclass
class IterationTrace:
    records: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.records:
            w.writerow([r["k"]] + [_fmt(r[k]) for k in ("F", "gnorm_c", "gnorm_b")]
                       + [r["S1"], r["S2"]]
                       + [_fmt(r[k]) for k in ("step_c", "step_b", "relH1err")])
        return buf.getvalue()


def _fmt(v) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else format(float(v), ".17g")


def run(p: Problem, init: Network, cfg: SolverConfig = SolverConfig(),
        q: QuadratureSpec = QuadratureSpec(), track_error: bool = True):
    """Iterate the configured scheme; returns ``(network, trace)``.

    Iteration ``k`` is recorded at ``theta^k``. The loop stops when
    ``||grad_c|| + ||(grad_b)_S|| <= grad_tol`` or after ``max_iters`` steps.
    Step failures raise :class:`SolverError` with the trace so far attached.
    """
    trace = IterationTrace()
    state = SolverState.fresh(init.n, cfg.frozen)
    net = init
    last = None
    track_error = track_error and p.target_u is not None
    for k in range(cfg.max_iters + 1):
        try:
            sys = assemble(p, net, q)
        except Exception as exc:
            raise SolverError(f"assembly failed at iteration {k}: {exc}", trace) from exc
        report = classify(p, net, sys, cfg, state.frozen)
        sel = np.asarray(report.S, dtype=int) - 1
        gc = float(np.linalg.norm(sys.grad_c))
        gb = float(np.linalg.norm(sys.grad_b[sel])) if sel.size else 0.0
        err = error_norms(p, net, q)["rel_h1_semi"] if track_error else math.nan
        trace.records.append({
            "k": k, "F": sys.F_value, "gnorm_c": gc, "gnorm_b": gb,
            "S1": len(report.S1), "S2": len(report.S2),
            "step_c": 0.0 if last is None else last.step_c,
            "step_b": 0.0 if last is None else last.step_b,
            "relH1err": err,
        })
        if gc + gb <= cfg.grad_tol or k == cfg.max_iters:
            break
        try:
            net, last = _step(cfg.scheme, p, net, q, cfg, state, sys)
        except SolverError as exc:
            exc.trace = trace
            raise
        except Exception as exc:
            raise SolverError(f"step {k} failed: {exc}", trace) from exc
        if last.redistributed:
            trace.events.append({"k": k, "redistributed": list(last.redistributed)})
        if last.used_fallback:
            trace.events.append({"k": k, "gauss_newton": True})
    return net, trace
