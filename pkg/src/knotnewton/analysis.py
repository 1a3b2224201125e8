"""Numerical certificates for local convergence of the block Newton schemes.

Everything here is a computable check: SPD tests with a dead-band, the
sufficient conditions on ``g_i / c_i`` and the mesh, the fixed-point Jacobian
``I - B^{-1} A`` of each scheme and its contraction factor in the ``A``-norm.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .model import Network, derivative, evaluate, mesh_quantities
from .problems import Problem, ProblemKind
from .quadrature import QuadratureSpec, composite_rule, merged_panels

__all__ = [
    "CertificateKind",
    "Certificate",
    "NotSPDError",
    "spd_check",
    "theorem_condition",
    "fixed_point_jacobian",
    "contraction_factor",
    "pds_norm_equivalence_test",
    "quadratic_form_bounds",
    "quadratic_forms",
    "jacobi_matrix",
    "error_norms",
    "TAU_GRID",
]

DEAD_BAND = 1e-12
TAU_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))


class CertificateKind(enum.Enum):
    SPD_FULL = "SPD_full"
    SPD_BLOCKS = "SPD_blocks"
    THM_CONDITION = "ThmCondition"
    CONTRACTION = "Contraction"
    JACOBI_SPD = "JacobiSPD"


@dataclass(frozen=True)
class Certificate:
    kind: CertificateKind
    verdict: bool
    witness: dict = field(default_factory=dict)
    inconclusive: bool = False

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "verdict": self.verdict,
                "inconclusive": self.inconclusive, "witness": _jsonable(self.witness)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


class NotSPDError(ValueError):
    def __init__(self, message, certificate: Certificate):
        super().__init__(message)
        self.certificate = certificate


def spd_check(M, kind: CertificateKind = CertificateKind.SPD_FULL) -> Certificate:
    """Symmetric positive-definiteness with a ``1e-12 * ||M||`` dead-band.

    Eigenvalues inside the dead-band make the verdict inconclusive (reported as
    not SPD). A failing verdict carries the eigenvector of the smallest
    eigenvalue as witness.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("spd_check needs a square matrix")
    if M.size == 0:
        return Certificate(kind, True, {"min_eig": math.inf})
    norm = np.linalg.norm(M, 2)
    asym = np.max(np.abs(M - M.T))
    if asym > 1e-10 * max(norm, np.finfo(float).tiny):
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    band = DEAD_BAND * norm
    lam = float(w[0])
    witness = {"min_eig": lam}
    if lam > band:
        return Certificate(kind, True, witness)
    witness["vector"] = V[:, 0]
    return Certificate(kind, False, witness, inconclusive=abs(lam) <= band)


def _spd_with_band(M, band_rel: float) -> bool | None:
    """True/False, or None when the smallest eigenvalue sits in the dead-band."""
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    band = band_rel * max(np.max(np.abs(w)), np.finfo(float).tiny)
    if w[0] > band:
        return True
    if w[0] < -band:
        return False
    return None


# -- sufficient conditions -------------------------------------------------

def theorem_condition(p: Problem, net: Network, sys, tau: float | None = None,
                      indices=None) -> Certificate:
    """Per-neuron margins of the local convergence conditions.

    ``margins[i] = g_i/c_i + r0*ht_i/24 - rhs_i`` with ``rhs_i`` equal to
    ``a(b_i)^2 / (2 mu) * (1/h_{i-1} + 1/h_i)`` for DR and 0 for LS. The
    general (non-critical) condition ``F_i^2 < c_i^2 A B_i`` is reported as
    ``general_margins = c_i^2 A B_i - F_i^2``, for the given ``tau`` or, when
    ``tau`` is None, the best over a grid of ``tau`` values.
    ``indices`` (1-based) restricts the check; default is all neurons.
    """
    n = net.n
    idx = np.arange(1, n + 1) if indices is None else np.asarray(sorted(indices), dtype=int)
    c = net.c[idx]
    zero = idx[c == 0]
    if zero.size:
        raise ValueError(f"condition inapplicable: c_{int(zero[0])} = 0")
    mesh = mesh_quantities(net)
    h = mesh.h
    g = sys.g[idx - 1]
    ht = mesh.h_tilde[idx - 1]
    inv_h = 1.0 / h[idx - 1] + 1.0 / h[idx]
    r0, mu = p.r0, p.mu
    base = g / c + r0 * ht / 24.0
    if p.kind is ProblemKind.DR:
        a2 = np.asarray(sys.a_at_b, dtype=float)[idx - 1] ** 2
        margins = base - a2 / (2.0 * mu) * inv_h
    else:
        a2 = np.zeros_like(base)
        margins = base.copy()

    def general(t):
        if p.kind is ProblemKind.DR:
            A = r0 * mesh.h_min ** 3 / 96.0 + mu * (1.0 - t) * mesh.h_min / 4.0
            B = base - a2 / (2.0 * t * mu) * inv_h
        else:
            A = r0 * mesh.h_min ** 3 / 96.0
            B = base
        return c ** 2 * A * B - sys.F_vec[idx - 1] ** 2

    taus = TAU_GRID if tau is None else (float(tau),)
    best_tau, best = None, None
    for t in taus:
        m = general(t)
        if best is None or np.min(m, initial=np.inf) > np.min(best, initial=np.inf):
            best_tau, best = t, m
    verdict = bool(np.all(margins > 0))
    witness = {
        "indices": idx,
        "margins": margins,
        "general_margins": best,
        "tau": best_tau,
        "general_verdict": bool(np.all(best > 0)),
    }
    if not verdict:
        witness["violating_index"] = int(idx[np.argmin(margins)])
    return Certificate(CertificateKind.THM_CONDITION, verdict, witness)


# -- fixed-point maps --------------------------------------------------------

def _blocks(sys_or_matrix, n_c=None):
    if n_c is None:
        A = sys_or_matrix.hessian()
        n_c = sys_or_matrix.H11.shape[0]
    else:
        A = np.asarray(sys_or_matrix, dtype=float)
    return A, int(n_c)


def _split(scheme) -> str:
    s = getattr(scheme, "value", scheme)
    s = str(s).lower().replace("-", "").replace("_", "")
    if s in ("nlgs", "lgs", "gs"):
        return "gs"
    if s in ("jb", "jacobi"):
        return "jb"
    raise ValueError(f"unknown scheme {scheme!r}")


def iteration_matrix(A, n_c, scheme) -> np.ndarray:
    """``B`` of the scheme: lower block triangle (Gauss-Seidel) or block diagonal."""
    B = np.array(A, dtype=float)
    B[:n_c, n_c:] = 0.0
    if _split(scheme) == "jb":
        B[n_c:, :n_c] = 0.0
    return B


def fixed_point_jacobian(sys_or_matrix, scheme, n_c: int | None = None) -> np.ndarray:
    """``I - B^{-1} A`` with ``A`` the full Hessian.

    Accepts an assembled system, or a Hessian matrix together with ``n_c``, the
    size of the ``c`` block.
    """
    A, n_c = _blocks(sys_or_matrix, n_c)
    B = iteration_matrix(A, n_c, scheme)
    try:
        X = np.linalg.solve(B, A)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("singular block matrix B") from None
    if not np.all(np.isfinite(X)) or np.linalg.cond(B) > 1e15:
        raise np.linalg.LinAlgError("singular block matrix B")
    return np.eye(A.shape[0]) - X


def _a_norm(J, A) -> float:
    # largest generalized eigenvalue of (J^T A J, A) is ||J||_A^2
    M = J.T @ A @ J
    M = 0.5 * (M + M.T)
    lam = sla.eigh(M, 0.5 * (A + A.T), eigvals_only=True)
    return math.sqrt(max(float(lam[-1]), 0.0))


def contraction_factor(sys_or_matrix, scheme, n_c: int | None = None) -> float:
    """``sigma = ||I - B^{-1} A||_A``; requires the Hessian ``A`` to be SPD."""
    A, n_c = _blocks(sys_or_matrix, n_c)
    cert = spd_check(A)
    if not cert.verdict:
        raise NotSPDError("Hessian is not SPD; contraction factor undefined", cert)
    J = fixed_point_jacobian(A, scheme, n_c)
    return _a_norm(J, A)


def jacobi_matrix(sys_or_matrix, n_c: int | None = None) -> np.ndarray:
    """The block sign-flipped matrix ``[[H11, -H12], [-H21, H22]]``."""
    A, n_c = _blocks(sys_or_matrix, n_c)
    out = np.array(A, dtype=float)
    out[:n_c, n_c:] *= -1.0
    out[n_c:, :n_c] *= -1.0
    return out


def pds_norm_equivalence_test(A, M):
    """Both sides of: ``M + M^T - A`` SPD iff ``||I - M^{-1} A||_A < 1``.

    Returns ``(spd_verdict, norm)``; the verdict is None inside the dead-band.
    """
    A = np.asarray(A, dtype=float)
    M = np.asarray(M, dtype=float)
    try:
        X = np.linalg.solve(M, A)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("M is singular") from None
    J = np.eye(A.shape[0]) - X
    verdict = _spd_with_band(M + M.T - A, 1e-10)
    return verdict, _a_norm(J, A)


# -- quadratic forms -----------------------------------------------------------

def quadratic_forms(w0: float, net: Network, q: QuadratureSpec = QuadratureSpec()):
    """``(H_Sigma, H_Lambda)`` for the constant weight ``w0``."""
    from .assembly import ingredients

    ing = ingredients(w0, net, q)
    n = net.n
    HS = np.block([[ing.SS, -ing.SH], [-ing.SH.T, ing.HH[1:, 1:]]])
    HL = np.block([[ing.HH, -ing.delta], [-ing.delta.T, np.zeros((n, n))]])
    return 0.5 * (HS + HS.T), 0.5 * (HL + HL.T)


def quadratic_form_bounds(w0: float, net: Network, samples: int, tau: float,
                          rng=None, q: QuadratureSpec = QuadratureSpec()):
    """Minimum slack of the two lower bounds over random ``(alpha, beta)``.

    Returns ``(slack_sigma, slack_lambda)``; each is ``min(form - bound)`` and is
    expected to be non-negative up to rounding.
    """
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    rng = np.random.default_rng(rng)
    HS, HL = quadratic_forms(w0, net, q)
    mesh = mesh_quantities(net)
    n = net.n
    h = mesh.h
    inv_h = 1.0 / h[:-1] + 1.0 / h[1:]
    slack_s = slack_l = math.inf
    for _ in range(samples):
        al = rng.standard_normal(n + 1)
        be = rng.standard_normal(n)
        v = np.concatenate((al, be))
        a2 = float(al @ al)
        bound_s = w0 * mesh.h_min ** 3 / 96.0 * a2 + w0 / 24.0 * float(np.sum(mesh.h_tilde * be ** 2))
        bound_l = (w0 * (1 - tau) * mesh.h_min / 4.0 * a2
                   - 1.0 / (2 * tau * w0) * float(np.sum(w0 ** 2 * inv_h * be ** 2)))
        scale = max(1.0, abs(float(v @ HS @ v)), abs(float(v @ HL @ v)))
        slack_s = min(slack_s, (float(v @ HS @ v) - bound_s) / scale)
        slack_l = min(slack_l, (float(v @ HL @ v) - bound_l) / scale)
    return slack_s, slack_l


# -- errors ------------------------------------------------------------------

def error_norms(p: Problem, net: Network, q: QuadratureSpec = QuadratureSpec()) -> dict:
    """``L2`` error, ``H1`` seminorm error and its relative value against ``|u|_1``."""
    if p.target_u is None:
        raise ValueError("problem has no exact solution")
    u = p.target_u
    du = p.exact_derivative

    def err(x):
        return u(x) - evaluate(net, x)

    def derr(x):
        return du(x) - derivative(net, x)

    panels = merged_panels(net, p.kinks())
    # the error integrands are measured against the solution's own size, so an
    # exact fit (error at round-off level) does not drive refinement
    ref_rule = composite_rule([lambda x: u(x) ** 2, lambda x: du(x) ** 2], panels, q)
    xr = ref_rule.nodes
    floors = (ref_rule(u(xr) ** 2), ref_rule(du(xr) ** 2), 0.0)
    fns = [lambda x: err(x) ** 2, lambda x: derr(x) ** 2, lambda x: du(x) ** 2]
    rule = composite_rule(fns, panels, q, floors)
    x = rule.nodes
    l2 = math.sqrt(rule(err(x) ** 2))
    h1 = math.sqrt(rule(derr(x) ** 2))
    ref = math.sqrt(rule(du(x) ** 2))
    return {"l2": l2, "h1_semi": h1, "rel_h1_semi": h1 / ref if ref > 0 else math.nan}
