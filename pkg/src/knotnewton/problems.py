"""The two variational problems and the built-in problem catalog.

``LS``: minimize ``1/2 int r (v - u)^2``.

``DR``: Ritz energy of ``-(a u')' + r u = f`` with ``u(x_L)`` imposed through
the network offset and ``u(x_R)`` through a penalty of weight ``gamma``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .expression import Expression, parse_expression
from .model import Interval

__all__ = [
    "ProblemKind",
    "CoefficientFunction",
    "Problem",
    "catalog",
    "problem_from_config",
    "residual_check",
    "CATALOG_NAMES",
]

_SANITY_GRID = 10_000
_KINK_TOL_REL = 1e-10


class ProblemKind(enum.Enum):
    LS = "ls"
    DR = "dr"


class DerivativeUndefined(ValueError):
    def __init__(self, message, indices):
        super().__init__(message)
        self.indices = list(indices)


@dataclass(frozen=True)
class CoefficientFunction:
    """A vectorized real function with an optional derivative and declared kinks.

    ``kinks`` are interior points where the function is not smooth (or has a
    layer that quadrature panels should be split at). Without an explicit
    ``derivative``, constants differentiate to zero and anything else falls back
    to a central difference.
    """

    value: Callable
    derivative: Callable | None = None
    kinks: tuple = ()
    constant: float | None = None
    label: str = ""

    @classmethod
    def const(cls, v: float) -> "CoefficientFunction":
        v = float(v)
        return cls(lambda x, v=v: np.full(np.shape(x), v), lambda x: np.zeros(np.shape(x)),
                   (), v, repr(v))

    @classmethod
    def from_expression(cls, src, derivative=None, kinks=()) -> "CoefficientFunction":
        expr = src if isinstance(src, Expression) else parse_expression(str(src))
        dexpr = None
        if derivative is not None:
            dexpr = derivative if isinstance(derivative, Expression) else parse_expression(str(derivative))
        if expr.is_constant:
            return cls(expr, dexpr or (lambda x: np.zeros(np.shape(x))),
                       tuple(sorted(kinks)), expr(0.0), str(expr))
        return cls(expr, dexpr, tuple(sorted(float(k) for k in kinks)), None, str(expr))

    def __call__(self, x):
        return self.value(x)

    def derivative_at(self, x, interval: Interval) -> np.ndarray:
        """Derivative at the points ``x``; NaN where it does not exist (at a kink)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        at_kink = self.at_kink(x, interval)
        if self.derivative is not None:
            out = np.asarray(self.derivative(x), dtype=float).copy()
        else:
            step = 1e-6 * interval.length
            out = (np.asarray(self.value(x + step)) - np.asarray(self.value(x - step))) / (2 * step)
        out[at_kink] = np.nan
        return out

    def at_kink(self, x, interval: Interval) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not self.kinks:
            return np.zeros(x.shape, dtype=bool)
        k = np.asarray(self.kinks)
        return np.min(np.abs(x[:, None] - k[None, :]), axis=1) <= _KINK_TOL_REL * interval.length


@dataclass(frozen=True)
class Problem:
    kind: ProblemKind
    interval: Interval
    r: CoefficientFunction
    a: CoefficientFunction | None = None
    f: CoefficientFunction | None = None
    target_u: CoefficientFunction | None = None
    left_value: float = 0.0
    right_value: float = 0.0
    gamma: float | None = None
    mu: float = 0.0
    r0: float = 0.0
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind is ProblemKind.DR and (self.a is None or self.f is None):
            raise ValueError("a DR problem needs a and f")
        if self.kind is ProblemKind.LS and self.target_u is None:
            raise ValueError("an LS problem needs a target function u")
        if self.gamma is not None and not self.gamma >= 0:
            raise ValueError("gamma must be non-negative")
        self._check_bounds()

    def _check_bounds(self):
        iv = self.interval
        x = np.linspace(iv.left, iv.right, _SANITY_GRID)
        rv = np.asarray(self.r(x), dtype=float)
        if self.kind is ProblemKind.DR:
            if not self.mu > 0:
                raise ValueError("DR problems need mu > 0")
            av = np.asarray(self.a(x), dtype=float)
            if np.min(av) < self.mu * (1 - 1e-12):
                raise ValueError(f"a(x) drops below mu={self.mu} (min sampled {np.min(av)})")
            if not self.r0 >= 0:
                raise ValueError("DR problems need r0 >= 0")
        else:
            if not self.r0 > 0:
                raise ValueError("LS problems need r0 > 0")
        if np.min(rv) < self.r0 * (1 - 1e-12):
            raise ValueError(f"r(x) drops below r0={self.r0} (min sampled {np.min(rv)})")

    @property
    def alpha(self) -> float:
        """Network offset: the imposed or target value at the left endpoint."""
        return self.left_value

    def penalty(self, n: int) -> float:
        """Boundary penalty weight; defaults to ``1e4 * (1 + n)`` for DR."""
        if self.kind is ProblemKind.LS:
            return 0.0
        return 1e4 * (1 + n) if self.gamma is None else float(self.gamma)

    def kinks(self) -> np.ndarray:
        pts = []
        for fn in (self.a, self.r, self.f, self.target_u):
            if fn is not None:
                pts.extend(fn.kinks)
        return np.unique(np.asarray(pts, dtype=float))

    @property
    def exact_derivative(self):
        """Derivative of the exact/target solution, or None when unavailable."""
        if self.target_u is None:
            return None
        if self.target_u.derivative is not None:
            return self.target_u.derivative
        u = self.target_u
        step = 1e-7 * self.interval.length
        return lambda x: (np.asarray(u(x + step)) - np.asarray(u(x - step))) / (2 * step)


# -- catalog ---------------------------------------------------------------

def _sech2(t):
    e = np.exp(-2.0 * np.abs(t))
    return 4.0 * e / (1.0 + e) ** 2


def _sp_reaction_diffusion(params) -> Problem:
    nu = float(params.get("nu", 1e-6))
    if not nu > 0:
        raise ValueError("nu must be positive")
    eps = math.sqrt(nu)
    shift = math.tanh(0.75 / eps)

    def u(x):
        return np.tanh((np.asarray(x) ** 2 - 0.25) / eps) - shift

    def du(x):
        x = np.asarray(x)
        return 2.0 * x / eps * _sech2((x ** 2 - 0.25) / eps)

    def f(x):
        x = np.asarray(x)
        s = (x ** 2 - 0.25) / eps
        th = np.tanh(s)
        return -2.0 * (eps - 4.0 * x ** 2 * th) * _sech2(s) + th - shift

    layers = (-0.5, 0.5)
    return Problem(
        kind=ProblemKind.DR,
        interval=Interval(-1.0, 1.0),
        a=CoefficientFunction.const(nu),
        r=CoefficientFunction.const(1.0),
        # layer centres are declared so quadrature panels split there
        f=CoefficientFunction(f, None, layers, None, "sp_f"),
        target_u=CoefficientFunction(u, du, layers, None, "sp_u"),
        left_value=0.0,
        right_value=0.0,
        gamma=params.get("gamma"),
        mu=nu,
        r0=1.0,
        name="sp_reaction_diffusion",
        params={"nu": nu},
    )


def _ls_xalpha(params) -> Problem:
    if "alpha_exp" not in params:
        raise ValueError("ls_xalpha needs parameter alpha_exp")
    p = float(params["alpha_exp"])
    if not 0 < p < 1:
        raise ValueError("alpha_exp must lie in (0, 1)")

    def u(x):
        return np.power(np.maximum(np.asarray(x, dtype=float), 0.0), p)

    def du(x):
        return p * np.power(np.asarray(x, dtype=float), p - 1.0)

    return Problem(
        kind=ProblemKind.LS,
        interval=Interval(0.0, 1.0),
        r=CoefficientFunction.const(1.0),
        target_u=CoefficientFunction(u, du, (), None, f"x^{p}"),
        left_value=0.0,
        r0=1.0,
        name="ls_xalpha",
        params={"alpha_exp": p},
    )


def _coef(spec, derivative=None, kinks=()):
    if spec is None:
        return None
    if isinstance(spec, (int, float)):
        spec = repr(float(spec))
    return CoefficientFunction.from_expression(spec, derivative, kinks)


def _from_expressions(kind: ProblemKind, cfg: dict, name: str) -> Problem:
    try:
        left, right = cfg.get("interval", [0.0, 1.0])
        interval = Interval(float(left), float(right))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad interval: {exc}") from None
    kinks = cfg.get("kinks") or {}
    r = _coef(cfg.get("r", 1.0), cfg.get("dr"), kinks.get("r", ()))
    u = _coef(cfg.get("u"), cfg.get("du"), kinks.get("u", ()))
    x = np.linspace(interval.left, interval.right, _SANITY_GRID)
    r0 = cfg.get("r0")
    if r0 is None:
        r0 = float(np.min(r(x)))
    if kind is ProblemKind.LS:
        if u is None:
            raise ValueError("ls problems need a target expression 'u'")
        left_value = cfg.get("left_value")
        if left_value is None:
            left_value = float(u(interval.left))
        return Problem(kind, interval, r, target_u=u, left_value=float(left_value),
                       r0=float(r0), name=name)
    a = _coef(cfg.get("a", 1.0), cfg.get("da"), kinks.get("a", ()))
    f = _coef(cfg.get("f"), None, kinks.get("f", ()))
    if f is None:
        raise ValueError("dr problems need a source expression 'f'")
    mu = cfg.get("mu")
    if mu is None:
        mu = float(np.min(a(x)))
    return Problem(
        kind, interval, r, a=a, f=f, target_u=u,
        left_value=float(cfg.get("left_value", 0.0)),
        right_value=float(cfg.get("right_value", 0.0)),
        gamma=None if cfg.get("gamma") is None else float(cfg["gamma"]),
        mu=float(mu), r0=float(r0), name=name,
    )


CATALOG_NAMES = ("sp_reaction_diffusion", "ls_xalpha", "ls_expr", "dr_expr")


def catalog(name: str, params: dict | None = None) -> Problem:
    """Look up a built-in problem.

    ``sp_reaction_diffusion``: ``-nu u'' + u = f`` on (-1, 1) with interior layers
    at +-1/2 (param ``nu``, default 1e-6; optional ``gamma``).
    ``ls_xalpha``: least-squares fit of ``x**alpha_exp`` on (0, 1).
    ``ls_expr`` / ``dr_expr``: built from expression strings in ``params``.
    """
    params = dict(params or {})
    if name == "sp_reaction_diffusion":
        return _sp_reaction_diffusion(params)
    if name == "ls_xalpha":
        return _ls_xalpha(params)
    if name == "ls_expr":
        return _from_expressions(ProblemKind.LS, params, name)
    if name == "dr_expr":
        return _from_expressions(ProblemKind.DR, params, name)
    raise ValueError(f"unknown catalog problem {name!r}; known: {', '.join(CATALOG_NAMES)}")


def problem_from_config(cfg: dict) -> Problem:
    """Build a problem from a config block; a ``catalog`` key takes precedence."""
    if cfg.get("catalog"):
        entry = cfg["catalog"]
        return catalog(entry["name"], entry.get("params", {}))
    kind = str(cfg.get("kind", "")).lower()
    if kind not in ("ls", "dr"):
        raise ValueError(f"problem kind must be 'ls' or 'dr', got {cfg.get('kind')!r}")
    return _from_expressions(ProblemKind(kind), cfg, f"{kind}_expr")


def residual_check(p: Problem, grid_size: int = 10_000, step: float | None = None) -> float:
    """Max PDE residual ``|-(a u')' + r u - f|`` of the exact solution on a grid.

    Uses the conservative three-point difference
    ``[a(x+h/2)(u(x+h)-u(x)) - a(x-h/2)(u(x)-u(x-h))] / h^2``.
    """
    if p.kind is not ProblemKind.DR:
        raise ValueError("residual_check applies to DR problems")
    if p.target_u is None:
        raise ValueError("problem has no exact solution")
    iv = p.interval
    h = 5e-4 * iv.length if step is None else float(step)
    x = np.linspace(iv.left + h, iv.right - h, grid_size)
    u = p.target_u
    flux_r = p.a(x + h / 2) * (u(x + h) - u(x))
    flux_l = p.a(x - h / 2) * (u(x) - u(x - h))
    res = -(flux_r - flux_l) / h ** 2 + p.r(x) * u(x) - p.f(x)
    return float(np.max(np.abs(res)))
