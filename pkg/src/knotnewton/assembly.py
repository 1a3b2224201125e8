"""Objective, block gradients and Hessian blocks of ``F(theta) = J(u_n(.; theta))``.

Notation: ``Sigma`` is the vector of ramps ``sigma_i(x) = max(0, x - b_i)``
(``i = 0..n``), ``H`` the vector of steps ``H_i(x) = H(x - b_i)`` and the delta
terms are collapsed to point evaluations at the breakpoints. Integrals are
evaluated on one composite rule per assembly whose panels are split at every
breakpoint, so every ``int w H_i H_j`` is a tail integral ``int_{b_max}^{x_R} w``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import linalg
from .model import MeshQuantities, Network, derivative, evaluate, mesh_quantities
from .problems import DerivativeUndefined, Problem, ProblemKind
from .quadrature import QuadratureSpec, Rule, composite_rule, merged_panels

__all__ = [
    "AssembledSystem",
    "Ingredients",
    "assemble",
    "objective",
    "grad_c",
    "grad_b",
    "compute_g",
    "compute_F_vec",
    "assemble_H11",
    "assemble_H12",
    "assemble_H22",
    "ingredients",
    "basis_at",
]


def _heaviside(t):
    return np.where(t > 0, 1.0, np.where(t < 0, 0.0, 0.5))


def basis_at(net: Network, x: np.ndarray):
    """Ramp and step basis at points ``x``: arrays of shape ``(len(x), n+1)``."""
    t = np.asarray(x, dtype=float)[:, None] - net.knots[None, :]
    return np.maximum(t, 0.0), _heaviside(t)


@dataclass(frozen=True)
class Ingredients:
    """Weighted integrals of basis products for a weight ``w``.

    ``SS = int w Sigma Sigma^T``, ``SH = int w Sigma H_n^T``, ``tail[i] =
    int_{b_i}^{x_R} w`` (``i = 0..n``) and ``delta[i, j] = w(b_j) H(b_j - b_i)``
    (``i = 0..n``, ``j = 1..n``), the collapsed ``int w H_{n+1} Lambda_n^T``.
    """

    SS: np.ndarray
    SH: np.ndarray
    tail: np.ndarray
    delta: np.ndarray

    @property
    def HH(self) -> np.ndarray:
        """``int w H_{n+1} H_{n+1}^T``, entry ``(i, j) = tail[max(i, j)]``."""
        m = self.tail.size
        idx = np.maximum.outer(np.arange(m), np.arange(m))
        return self.tail[idx]


def _ingredients(net, S, Hs, wts, w_nodes, w_at_b, inside):
    ww = wts * w_nodes
    SS = S.T @ (ww[:, None] * S)
    SS = 0.5 * (SS + SS.T)
    SH = S.T @ (ww[:, None] * Hs[:, 1:])
    tail = Hs.T @ ww
    delta = _heaviside(net.b[None, :] - net.knots[:, None]) * (w_at_b * inside)[None, :]
    return Ingredients(SS, SH, tail, delta)


def ingredients(w, net: Network, q: QuadratureSpec = QuadratureSpec()) -> Ingredients:
    """Basis integrals for a weight function ``w`` (callable or constant)."""
    if np.isscalar(w):
        w0 = float(w)
        w = lambda x: np.full(np.shape(x), w0)
    rule = composite_rule([w], merged_panels(net), q)
    S, Hs = basis_at(net, rule.nodes)
    inside = net.interval.contains_open(net.b)
    b_clip = np.clip(net.b, net.interval.left, net.interval.right)
    return _ingredients(net, S, Hs, rule.weights, np.asarray(w(rule.nodes), float),
                        np.asarray(w(b_clip), float).reshape(-1), inside)


@dataclass(frozen=True)
class AssembledSystem:
    """All first and second derivative quantities at one parameter point."""

    F_value: float
    grad_c: np.ndarray
    grad_b: np.ndarray
    H11: np.ndarray
    H12: np.ndarray
    H22: np.ndarray
    g: np.ndarray
    F_vec: np.ndarray
    mesh: MeshQuantities
    kind: ProblemKind
    gamma: float
    a_at_b: np.ndarray
    g_undefined: np.ndarray
    inside: np.ndarray
    r_tail: np.ndarray
    c: np.ndarray
    rule: Rule
    nodal: tuple | None = None

    def newton_c(self) -> np.ndarray:
        """Exact Newton step in ``c``: ``-H11^{-1} grad_c``.

        When the breakpoints split the interval into cells of positive length,
        the step is computed in the hat basis on that mesh, where the matrix is
        banded and far better conditioned than the ramp Gram matrix, and mapped
        back to ramp coefficients (slope jumps).
        """
        if self.nodal is None:
            return -linalg.spd_solve(self.H11, self.grad_c)
        K, grad_v, t = self.nodal
        dv = np.concatenate(([0.0], -linalg.spd_solve(K, grad_v)))
        slopes = np.diff(dv) / np.diff(t)
        return np.concatenate((slopes[:1], np.diff(slopes)))

    @property
    def n(self) -> int:
        return self.grad_b.size

    def gradient(self) -> np.ndarray:
        return np.concatenate((self.grad_c, self.grad_b))

    def hessian(self) -> np.ndarray:
        """Full ``(2n+1)``-square Hessian ``[[H11, H12], [H12^T, H22]]``."""
        return np.block([[self.H11, self.H12], [self.H12.T, self.H22]])

    def gauss_newton_22(self, c_hat: np.ndarray) -> np.ndarray:
        """``D(c) (int r H_n H_n^T) D(c)`` (+ ``gamma c c^T`` for DR)."""
        n = c_hat.size
        idx = np.maximum.outer(np.arange(n), np.arange(n)) + 1
        G = c_hat[:, None] * self.r_tail[idx] * c_hat[None, :]
        if self.kind is ProblemKind.DR:
            G = G + self.gamma * np.outer(c_hat, c_hat)
        return G

    def to_json(self) -> str:
        # float repr round-trips, so matrices keep full double precision
        names = ("grad_c", "grad_b", "H11", "H12", "H22", "g", "F_vec")
        out = {"F_value": self.F_value}
        out.update({k: np.asarray(getattr(self, k)).tolist() for k in names})
        return json.dumps(out)


def _hat_basis(t, x):
    """Hat functions on nodes ``t`` (the first node's hat dropped) and their slopes."""
    m = t.size - 1
    k = np.clip(np.searchsorted(t, x, side="right") - 1, 0, m - 1)
    h = t[k + 1] - t[k]
    lam = (x - t[k]) / h
    rows = np.arange(x.size)
    Phi = np.zeros((x.size, m + 1))
    dPhi = np.zeros((x.size, m + 1))
    Phi[rows, k] = 1.0 - lam
    Phi[rows, k + 1] = lam
    dPhi[rows, k] = -1.0 / h
    dPhi[rows, k + 1] = 1.0 / h
    return Phi[:, 1:], dPhi[:, 1:]


def _test_functions(p: Problem):
    """Functions the composite rule must resolve for this problem."""
    if p.kind is ProblemKind.LS:
        r, u = p.r, p.target_u
        fns = [lambda x: u(x) * u(x) * r(x), lambda x: u(x) * r(x)]
        if r.constant is None:
            fns.append(r)
        return fns
    fns = [fn for fn in (p.a, p.r, p.f) if fn.constant is None]
    return fns or [lambda x: np.ones(np.shape(x))]


def _values(fn, x):
    return np.asarray(fn(x), dtype=float).reshape(-1) * np.ones(np.shape(x))


def assemble(p: Problem, net: Network, q: QuadratureSpec = QuadratureSpec(),
             rule: Rule | None = None) -> AssembledSystem:
    """Evaluate every block at ``net`` in one pass over a shared quadrature rule.

    Breakpoints outside the open interval contribute no point terms (their delta
    and ``g`` entries are zero); such neurons are always in ``S1``.
    """
    iv = net.interval
    n = net.n
    if rule is None:
        rule = composite_rule(_test_functions(p), merged_panels(net, p.kinks()), q)
    x, wts = rule.nodes, rule.weights
    S, Hs = basis_at(net, x)
    c = net.c
    c_hat = c[1:]
    un = net.alpha + S @ c
    dun = Hs @ c
    inside = iv.contains_open(net.b)
    b_in = np.clip(net.b, iv.left, iv.right)
    r_x = _values(p.r, x)
    r_b = _values(p.r, b_in) * inside
    r_ing = _ingredients(net, S, Hs, wts, r_x, r_b, inside)
    un_b = evaluate(net, b_in) if n else np.zeros(0)
    dun_b = derivative(net, b_in) if n else np.zeros(0)
    un_b = np.atleast_1d(un_b)
    dun_b = np.atleast_1d(dun_b)
    g_undefined = np.zeros(n, dtype=bool)
    a_at_b = np.ones(n)

    t = np.concatenate(([iv.left], net.b, [iv.right]))
    use_nodal = bool(np.all(np.diff(t) > 0))
    if use_nodal:
        Phi, dPhi = _hat_basis(t, x)

    if p.kind is ProblemKind.LS:
        gamma = 0.0
        u_x = _values(p.target_u, x)
        res = un - u_x
        F_value = 0.5 * float(np.sum(wts * r_x * res * res))
        grad_c = S.T @ (wts * r_x * res)
        # F_j = int_{b_j}^R r (u - u_n)
        F_vec = -(Hs[:, 1:].T @ (wts * r_x * res))
        g = r_b * (un_b - _values(p.target_u, b_in)) * inside if n else np.zeros(0)
        H11 = r_ing.SS.copy()
        H12 = -r_ing.SH * c_hat[None, :]
        H22_core = np.zeros((n, n))
        if use_nodal:
            K = Phi.T @ ((wts * r_x)[:, None] * Phi)
            nodal = (0.5 * (K + K.T), Phi.T @ (wts * r_x * res), t)
    else:
        gamma = p.penalty(n)
        beta = p.right_value
        a_x = _values(p.a, x)
        f_x = _values(p.f, x)
        a_b = _values(p.a, b_in)
        a_at_b = a_b
        a_ing = _ingredients(net, S, Hs, wts, a_x, a_b * inside, inside)
        dbar = np.maximum(iv.right - net.knots, 0.0)
        bnd = net.alpha + float(dbar @ c) - beta
        F_value = float(0.5 * np.sum(wts * (a_x * dun ** 2 + r_x * un ** 2))
                        - np.sum(wts * f_x * un) + 0.5 * gamma * bnd ** 2)
        grad_c = Hs.T @ (wts * a_x * dun) + S.T @ (wts * (r_x * un - f_x)) + gamma * bnd * dbar
        F_vec = (Hs[:, 1:].T @ (wts * (f_x - r_x * un))
                 - a_b * dun_b * inside - gamma * bnd)
        if n:
            da = p.a.derivative_at(b_in, iv)
            g_undefined = np.isnan(da) & inside
            g = (r_b * un_b - _values(p.f, b_in) - np.where(g_undefined, 0.0, da) * dun_b) * inside
            g = np.where(g_undefined, np.nan, g)
        else:
            g = np.zeros(0)
        H11 = a_ing.HH + r_ing.SS + gamma * np.outer(dbar, dbar)
        H12 = -(a_ing.delta + r_ing.SH) * c_hat[None, :] - gamma * np.outer(dbar, c_hat)
        H22_core = gamma * np.outer(c_hat, c_hat)
        if use_nodal:
            K = dPhi.T @ ((wts * a_x)[:, None] * dPhi) + Phi.T @ ((wts * r_x)[:, None] * Phi)
            K[-1, -1] += gamma
            gv = dPhi.T @ (wts * a_x * dun) + Phi.T @ (wts * (r_x * un - f_x))
            gv[-1] += gamma * bnd
            nodal = (0.5 * (K + K.T), gv, t)

    grad_b = c_hat * F_vec
    H12 = H12.copy()
    if n:
        H12[np.arange(1, n + 1), np.arange(n)] += F_vec
    idx = np.maximum.outer(np.arange(n), np.arange(n)) + 1
    H22 = c_hat[:, None] * r_ing.tail[idx] * c_hat[None, :] + np.diag(c_hat * g) + H22_core
    H11 = 0.5 * (H11 + H11.T)
    H22 = 0.5 * (H22 + H22.T)
    sys = AssembledSystem(
        F_value=F_value, grad_c=grad_c, grad_b=grad_b, H11=H11, H12=H12, H22=H22,
        g=g, F_vec=F_vec, mesh=mesh_quantities(net), kind=p.kind, gamma=gamma,
        a_at_b=a_at_b, g_undefined=g_undefined, inside=inside, r_tail=r_ing.tail,
        c=c, rule=rule, nodal=nodal if use_nodal else None,
    )
    return sys


# -- single-quantity entry points -------------------------------------------

def objective(p: Problem, net: Network, q: QuadratureSpec = QuadratureSpec()) -> float:
    return assemble(p, net, q).F_value


def grad_c(p: Problem, net: Network, q: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    return assemble(p, net, q).grad_c


def grad_b(p: Problem, net: Network, q: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    return assemble(p, net, q).grad_b


def compute_F_vec(p: Problem, net: Network, q: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    return assemble(p, net, q).F_vec


def compute_g(p: Problem, net: Network) -> np.ndarray:
    """Pointwise ``g_i`` at the breakpoints.

    Raises :class:`DerivativeUndefined` when ``a'`` does not exist at some
    breakpoint (a declared kink of ``a``).
    """
    iv = net.interval
    if net.n == 0:
        return np.zeros(0)
    inside = iv.contains_open(net.b)
    b_in = np.clip(net.b, iv.left, iv.right)
    un_b = np.atleast_1d(evaluate(net, b_in))
    r_b = _values(p.r, b_in)
    if p.kind is ProblemKind.LS:
        return r_b * (un_b - _values(p.target_u, b_in)) * inside
    da = p.a.derivative_at(b_in, iv)
    bad = np.flatnonzero(np.isnan(da) & inside)
    if bad.size:
        labels = ", ".join(str(i + 1) for i in bad)
        raise DerivativeUndefined(f"a' does not exist at breakpoint index {labels}", bad + 1)
    dun_b = np.atleast_1d(derivative(net, b_in))
    return (r_b * un_b - _values(p.f, b_in) - da * dun_b) * inside


def assemble_H11(p, net, q: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    return assemble(p, net, q).H11


def assemble_H12(p, net, q: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    return assemble(p, net, q).H12


def assemble_H22(p, net, q: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    if p.kind is ProblemKind.DR and net.n:
        compute_g(p, net)
    return assemble(p, net, q).H22
