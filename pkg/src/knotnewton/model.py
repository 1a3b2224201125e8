"""Shallow ReLU networks on an interval, viewed as free-knot piecewise-linear functions.

A network with ``n`` hidden neurons is

    u_n(x) = alpha + sum_{i=0}^{n} c_i * max(0, x - b_i)

with ``b_0`` pinned to the left end of the interval, so it carries ``n + 1``
linear parameters ``c`` and ``n`` breakpoints ``b``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Interval",
    "Network",
    "MeshQuantities",
    "evaluate",
    "derivative",
    "mesh_quantities",
    "canonicalize",
    "default_h_floor",
    "uniform_network",
]

_HFLOOR_REL = 1e-12


@dataclass(frozen=True)
class Interval:
    left: float
    right: float

    def __post_init__(self):
        if not (math.isfinite(self.left) and math.isfinite(self.right)):
            raise ValueError("interval endpoints must be finite")
        if not self.left < self.right:
            raise ValueError(f"empty interval [{self.left}, {self.right}]")

    @property
    def length(self) -> float:
        return self.right - self.left

    def contains_open(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x > self.left) & (x < self.right)


def default_h_floor(interval: Interval) -> float:
    return _HFLOOR_REL * interval.length


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Network:
    """Parameters of one network. Arrays are stored read-only."""

    interval: Interval
    alpha: float
    c: np.ndarray
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        c = _frozen_array(self.c, "c")
        b = _frozen_array(self.b, "b")
        if c.size != b.size + 1:
            raise ValueError(f"need len(c) == len(b) + 1, got {c.size} and {b.size}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n(self) -> int:
        return self.b.size

    @property
    def knots(self) -> np.ndarray:
        """Breakpoints including the pinned left endpoint, i.e. ``(b_0, ..., b_n)``."""
        return np.concatenate(([self.interval.left], self.b))

    @property
    def outside(self) -> np.ndarray:
        """Mask of breakpoints that are not inside the open interval."""
        return ~self.interval.contains_open(self.b)

    def replace(self, c=None, b=None, alpha=None) -> "Network":
        return Network(
            self.interval,
            self.alpha if alpha is None else alpha,
            self.c if c is None else c,
            self.b if b is None else b,
        )

    def __call__(self, x):
        return evaluate(self, x)

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "interval": [self.interval.left, self.interval.right],
            "alpha": self.alpha,
            "c": [float(v) for v in self.c],
            "b": [float(v) for v in self.b],
        }

    def to_json(self) -> str:
        # repr of a Python float round-trips, which is all 17 digits can promise
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Network":
        try:
            left, right = data["interval"]
            return cls(Interval(float(left), float(right)), data.get("alpha", 0.0),
                       data["c"], data.get("b", []))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed network object: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "Network":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (self.interval == other.interval and self.alpha == other.alpha
                and np.array_equal(self.c, other.c) and np.array_equal(self.b, other.b))

    __hash__ = None


@dataclass(frozen=True)
class MeshQuantities:
    h: np.ndarray
    h_min: float
    h_tilde: np.ndarray
    d: np.ndarray

    @property
    def d_full(self) -> np.ndarray:
        """Distances ``x_R - b_i`` for ``i = 0..n`` (includes the left endpoint)."""
        return np.concatenate(([self.h.sum()], self.d))


def evaluate(net: Network, x):
    """Value of the network at ``x`` (scalar or array)."""
    x = np.asarray(x, dtype=float)
    ramps = np.maximum(0.0, x[..., None] - net.knots)
    out = net.alpha + ramps @ net.c
    return float(out) if out.ndim == 0 else out


def derivative(net: Network, x):
    """Slope of the network, using H(0) = 1/2 exactly at a breakpoint.

    At ``x = b_i`` this is the mean of the two one-sided slopes,
    ``sum_{j<i} c_j + c_i / 2``.
    """
    x = np.asarray(x, dtype=float)
    t = x[..., None] - net.knots
    steps = np.where(t > 0, 1.0, np.where(t < 0, 0.0, 0.5))
    out = steps @ net.c
    return float(out) if out.ndim == 0 else out


def mesh_quantities(net: Network) -> MeshQuantities:
    pts = np.concatenate(([net.interval.left], net.b, [net.interval.right]))
    h = np.diff(pts)
    h_tilde = np.minimum(h[:-1], h[1:])
    d = net.interval.right - net.b
    return MeshQuantities(h=h, h_min=float(h.min()), h_tilde=h_tilde, d=d)


def canonical_order(c, b, interval: Interval, h_floor: float | None = None):
    """Sort breakpoints and enforce the minimum gap.

    Returns ``(c, b, perm)`` where ``perm`` maps new neuron positions to old ones
    (``b_new = b_old[perm]`` before nudging).
    """
    c = np.array(c, dtype=float).reshape(-1)
    b = np.array(b, dtype=float).reshape(-1)
    if c.size != b.size + 1:
        raise ValueError(f"need len(c) == len(b) + 1, got {c.size} and {b.size}")
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite network parameters")
    if h_floor is None:
        h_floor = default_h_floor(interval)
    perm = np.argsort(b, kind="stable")
    b = b[perm]
    c = np.concatenate((c[:1], c[1:][perm]))
    for i in range(1, b.size):
        if b[i] - b[i - 1] < h_floor:
            b[i] = b[i - 1] + h_floor
            while b[i] - b[i - 1] < h_floor:
                b[i] = np.nextafter(b[i], np.inf)
    return c, b, perm


def canonicalize(c, b, interval: Interval, h_floor: float | None = None,
                 alpha: float = 0.0) -> Network:
    """Build a network with sorted, minimally separated breakpoints.

    Each ``c_i`` (``i >= 1``) travels with its breakpoint; ``c_0`` stays on the
    left endpoint. Breakpoints outside the open interval are kept; callers find
    them through :attr:`Network.outside`.
    """
    c, b, _ = canonical_order(c, b, interval, h_floor)
    return Network(interval, alpha, c, b)


def uniform_network(interval: Interval, n: int, alpha: float = 0.0) -> Network:
    """``n`` equally spaced breakpoints and zero coefficients."""
    if n < 0:
        raise ValueError("n must be non-negative")
    b = interval.left + np.arange(1, n + 1) * interval.length / (n + 1)
    return Network(interval, alpha, np.zeros(n + 1), b)
