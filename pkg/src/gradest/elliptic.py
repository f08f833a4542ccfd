"""Positive solutions of ``-Delta u = A`` and the gradient bound on ``Q = |grad log u|^2 + A/u``.

The pipeline is: solve for the mean-zero potential, shift it to a positive
solution (constants are harmonic, so the equation is untouched), form the
Harnack quantity ``Q`` and compare ``sup Q`` with the explicit right-hand side

    2n * sup max{ K + b - A/u,
                  (A^2 + |grad A|^2 / (2b)) / u^2
                  - [ (4/n)(A/u - K)^2 + 2K A/u + Delta A / u ] }

where ``b > 0`` is the free Young parameter and ``K >= 0`` bounds the Ricci
curvature from below by ``-K``. The shorter form without ``b`` and without
``|grad A|^2`` is evaluated alongside as a comparator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import cg

from . import calculus as dc
from .geometry import FlatTorus, ManifoldDescriptor, check_field, integrate


class CompatibilityError(ValueError):
    """Source does not integrate to zero, so ``-Delta v = A`` has no solution."""


class SolverError(RuntimeError):
    """Iterative solve failed to reach its tolerance."""


class PDEPreconditionError(ValueError):
    """An identity that is only valid on solutions was called on a non-solution."""


def _sup(f: np.ndarray) -> float:
    return float(np.max(np.abs(f))) if np.size(f) else 0.0


def solve_poisson_mean_zero(
    m: ManifoldDescriptor, A: np.ndarray, *, rtol: float = 1e-13, maxiter: int | None = None
) -> np.ndarray:
    """Mean-zero ``v`` with ``-Delta v = A``."""
    A = check_field(m, A)
    if abs(integrate(m, A)) > 1e-10 * m.volume:
        raise CompatibilityError(
            f"source must integrate to zero on a closed manifold, got {integrate(m, A):.3e}"
        )
    if isinstance(m, FlatTorus):
        symbol = -m.laplacian_symbol
        symbol.flat[0] = 1.0
        vhat = np.fft.fftn(A) / symbol
        vhat.flat[0] = 0.0
        return np.fft.ifftn(vhat).real
    rhs = m.areas * A
    rhs -= rhs.mean()
    v, info = cg(m.stiffness, rhs, rtol=rtol, atol=0.0, maxiter=maxiter)
    if info != 0:
        raise SolverError(f"conjugate gradients did not converge (info={info})")
    return v - integrate(m, v) / m.volume


def positive_shift(v: np.ndarray, delta: float) -> np.ndarray:
    """``v - min v + delta``, a solution of the same equation with minimum ``delta``."""
    if not delta > 0:
        raise ValueError(f"positivity shift must be > 0, got {delta}")
    v = np.asarray(v, dtype=float)
    return v - v.min() + delta


def log_transform(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if not np.all(u > 0):
        raise ValueError(f"log transform needs u > 0, min(u) = {u.min():.3e}")
    return np.log(u)


def harnack_Q(m: ManifoldDescriptor, u: np.ndarray, A: np.ndarray) -> np.ndarray:
    """``|grad w|^2 + A/u`` with ``w = log u``."""
    w = log_transform(check_field(m, u))
    return dc.gradient_norm_sq(m, w) + check_field(m, A) / u


def poisson_residual(m: ManifoldDescriptor, u: np.ndarray, A: np.ndarray) -> np.ndarray:
    return dc.laplace_beltrami(m, u) + check_field(m, A)


def _require_solution(m, u, A, pde_tol):
    res = _sup(poisson_residual(m, u, A))
    if res > pde_tol * max(1.0, _sup(A)):
        raise PDEPreconditionError(
            f"(u, A) is not a solution of -Delta u = A: sup|Delta u + A| = {res:.3e}"
        )


def q_identity_residual(
    m: ManifoldDescriptor, u: np.ndarray, A: np.ndarray, *, pde_tol: float = 1e-6
) -> np.ndarray:
    """``Q + Delta w``, which vanishes for solutions of ``-Delta u = A``."""
    _require_solution(m, u, A, pde_tol)
    return harnack_Q(m, u, A) + dc.laplace_beltrami(m, log_transform(u))


def quotient_laplacian_residual(
    m: ManifoldDescriptor, u: np.ndarray, A: np.ndarray, *, pde_tol: float = 1e-6
) -> np.ndarray:
    """``Delta(A/u)`` minus its expansion ``Delta A/u - 2(grad A, grad w)/u + (A/u)(2Q - A/u)``."""
    _require_solution(m, u, A, pde_tol)
    w = log_transform(u)
    q = A / u
    Q = harnack_Q(m, u, A)
    expansion = (
        dc.laplace_beltrami(m, A) / u - 2.0 * dc.gradient_inner(m, A, w) / u + q * (2.0 * Q - q)
    )
    return dc.laplace_beltrami(m, q) - expansion


def _bound_terms(m, u, A, K, lap_A, grad_A_sq):
    A = check_field(m, A)
    u = check_field(m, u)
    if not np.all(u > 0):
        raise ValueError("bound needs u > 0")
    if K < 0:
        raise ValueError(f"K must be >= 0, got {K}")
    lap_A = dc.laplace_beltrami(m, A) if lap_A is None else lap_A
    grad_A_sq = dc.gradient_norm_sq(m, A) if grad_A_sq is None else grad_A_sq
    n = m.dimension
    q = A / u
    bracket = (4.0 / n) * (q - K) ** 2 + 2.0 * K * q + lap_A / u
    return n, q, bracket, grad_A_sq


def theorem1_rhs(
    m: ManifoldDescriptor,
    u: np.ndarray,
    A: np.ndarray,
    K: float,
    b: float,
    *,
    lap_A: np.ndarray | None = None,
    grad_A_sq: np.ndarray | None = None,
) -> float:
    """Right-hand side of the bound with explicit Young parameter ``b``.

    ``b = 1/2`` gives the ``(A^2 + |grad A|^2) / u^2`` variant.
    """
    if not b > 0:
        raise ValueError(f"Young parameter b must be > 0, got {b}")
    n, q, bracket, grad_A_sq = _bound_terms(m, u, A, K, lap_A, grad_A_sq)
    first = K + b - q
    second = (A**2 + grad_A_sq / (2.0 * b)) / u**2 - bracket
    return float(2 * n * np.max(np.maximum(first, second)))


def theorem1_statement_rhs(
    m: ManifoldDescriptor,
    u: np.ndarray,
    A: np.ndarray,
    K: float,
    *,
    lap_A: np.ndarray | None = None,
) -> float:
    """Comparator form ``2n sup max{K - A/u, A^2/u^2 - [...]}`` (no ``b``, no ``|grad A|^2``)."""
    n, q, bracket, _ = _bound_terms(m, u, A, K, lap_A, 0.0)
    return float(2 * n * np.max(np.maximum(K - q, q**2 - bracket)))


def bound_holds(margin: float, rhs: float) -> bool:
    return margin >= -1e-6 * max(1.0, abs(rhs))


@dataclass
class EllipticScenario:
    manifold: ManifoldDescriptor
    source: np.ndarray
    delta: float = 1.0
    b: float = 0.5
    K: float = 0.0
    name: str = "custom"
    lap_source: np.ndarray | None = None
    grad_source_sq: np.ndarray | None = None
    cg_maxiter: int | None = None

    def __post_init__(self):
        self.source = check_field(self.manifold, self.source)
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if not self.b > 0:
            raise ValueError(f"b must be > 0, got {self.b}")
        if not self.K >= 0:
            raise ValueError(f"K must be >= 0, got {self.K}")
        if abs(integrate(self.manifold, self.source)) > 1e-10 * self.manifold.volume:
            raise CompatibilityError("scenario source does not integrate to zero")


@dataclass
class EllipticReport:
    scenario: str
    manifold: str
    n: int
    N: str
    b: float
    K: float
    delta: float
    sup_Q: float
    argmax: int
    rhs_general_b: float
    rhs_theorem_statement: float
    margin: float
    margin_statement: float
    holds: bool
    holds_statement: bool
    res_q: float
    res_quot: float
    res_solver: float
    extras: dict = field(default_factory=dict)

    CSV_COLUMNS = (
        "manifold", "n", "N", "b", "K", "delta", "sup_Q", "rhs", "margin", "holds",
        "res_q", "res_quot", "res_solver",
    )

    def csv_row(self) -> dict:
        return {
            "manifold": self.manifold, "n": self.n, "N": self.N, "b": self.b, "K": self.K,
            "delta": self.delta, "sup_Q": self.sup_Q, "rhs": self.rhs_general_b,
            "margin": self.margin, "holds": self.holds, "res_q": self.res_q,
            "res_quot": self.res_quot, "res_solver": self.res_solver,
        }


def resolution_label(m: ManifoldDescriptor) -> str:
    if isinstance(m, FlatTorus):
        res = set(m.resolutions)
        return str(m.resolutions[0]) if len(res) == 1 else "x".join(map(str, m.resolutions))
    return str(m.node_count)


def verify_theorem1(scenario: EllipticScenario) -> EllipticReport:
    """Solve, shift, build ``Q`` and compare ``sup Q`` against both bound forms."""
    m, A = scenario.manifold, scenario.source
    v = solve_poisson_mean_zero(m, A, maxiter=scenario.cg_maxiter)
    u = positive_shift(v, scenario.delta)
    Q = harnack_Q(m, u, A)
    argmax = int(np.argmax(Q))
    sup_Q = float(Q.flat[argmax])
    rhs = theorem1_rhs(
        m, u, A, scenario.K, scenario.b,
        lap_A=scenario.lap_source, grad_A_sq=scenario.grad_source_sq,
    )
    rhs_stmt = theorem1_statement_rhs(m, u, A, scenario.K, lap_A=scenario.lap_source)
    res_solver = _sup(poisson_residual(m, u, A))
    # identities are checked against the solver's own residual, never the bound
    pde_tol = max(1e-6, 10 * res_solver / max(1.0, _sup(A)))
    margin, margin_stmt = rhs - sup_Q, rhs_stmt - sup_Q
    return EllipticReport(
        scenario=scenario.name,
        manifold=m.kind,
        n=m.dimension,
        N=resolution_label(m),
        b=scenario.b,
        K=scenario.K,
        delta=scenario.delta,
        sup_Q=sup_Q,
        argmax=argmax,
        rhs_general_b=rhs,
        rhs_theorem_statement=rhs_stmt,
        margin=margin,
        margin_statement=margin_stmt,
        holds=bound_holds(margin, rhs),
        holds_statement=bound_holds(margin_stmt, rhs_stmt),
        res_q=_sup(q_identity_residual(m, u, A, pde_tol=pde_tol)),
        res_quot=_sup(quotient_laplacian_residual(m, u, A, pde_tol=pde_tol)),
        res_solver=res_solver,
        extras={"min_u": float(u.min()), "sup_A": _sup(A)},
    )
