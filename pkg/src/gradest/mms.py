"""Manufactured solutions with exact derivative sets, and the refinement-study driver.

Torus entries are written once as symbolic expressions in ``(x, y, t)``; the
induced source ``A = -Delta u`` (elliptic) or ``A = u_t - Delta u`` (parabolic)
and all derivatives are obtained symbolically and compiled to numpy functions.
All torus entries assume side length ``2 pi``. Sphere entries are constants plus
restrictions of homogeneous harmonic polynomials, which are Laplace-Beltrami
eigenfunctions with eigenvalue ``-l(l + 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import sympy as sym

from . import calculus as dc
from . import elliptic as el
from . import parabolic as pa
from .geometry import FlatTorus, ManifoldDescriptor, SphereMesh, build_flat_torus

CATALOG_VERSION = 1
TWO_PI = 2.0 * math.pi

_x, _y, _t = sym.symbols("x y t", real=True)

# name -> (expression, dimension)
ELLIPTIC_TORUS = {
    "constant": (sym.Integer(2), 1),
    "shifted-cos": (2 + sym.cos(_x), 1),
    "product": (3 + sym.cos(_x) * sym.cos(_y), 2),
    "exp-cos": (sym.exp(sym.cos(_x)), 1),
    "exp-mixed": (sym.exp(sym.sin(_x) * sym.cos(_y) / 2), 2),
}

PARABOLIC_TORUS = {
    "decay": (2 + sym.exp(-2 * _t) * sym.cos(_x), 1),
    "homogeneous": (2 + sym.exp(-_t) * sym.cos(_x), 1),
    "driven": (2 + sym.sin(_t) * sym.cos(_x), 1),
    "exp-decay": (sym.exp(sym.exp(-_t) * sym.cos(_x)), 1),
    "decay-2d": (3 + sym.exp(-_t) * sym.cos(_x) * sym.cos(_y), 2),
}


@dataclass(frozen=True)
class _Harmonic:
    """``P(x, y, z)`` homogeneous harmonic of degree ``l``, with its ambient gradient."""

    degree: int
    value: Callable
    ambient_grad: Callable


_Z = _Harmonic(1, lambda X: X[:, 2], lambda X: np.tile([0.0, 0.0, 1.0], (len(X), 1)))
_XY = _Harmonic(
    2, lambda X: X[:, 0] * X[:, 1], lambda X: np.stack([X[:, 1], X[:, 0], 0 * X[:, 0]], axis=1)
)

# name -> (constant, harmonic, time factor exponent or None for elliptic)
ELLIPTIC_SPHERE = {"sph-l1": (2.0, _Z), "sph-l2": (2.0, _XY)}
PARABOLIC_SPHERE = {"sph-decay": (2.0, _Z)}


class CatalogError(KeyError):
    """Unknown catalog entry, or an entry used on a manifold it does not fit."""


def _compile(expr):
    f = sym.lambdify((_x, _y, _t), expr, modules="numpy")

    def evaluate(x, y, t=0.0):
        return f(x, y, t) + np.zeros(np.shape(x))

    return evaluate


@lru_cache(maxsize=None)
def _elliptic_torus_funcs(name):
    u, dim = ELLIPTIC_TORUS[name]
    A = -(sym.diff(u, _x, 2) + sym.diff(u, _y, 2))
    grad = [sym.diff(A, _x), sym.diff(A, _y)]
    lap = sym.diff(A, _x, 2) + sym.diff(A, _y, 2)
    return dim, _compile(u), _compile(A), [_compile(g) for g in grad], _compile(lap)


@lru_cache(maxsize=None)
def _parabolic_torus_funcs(name):
    u, dim = PARABOLIC_TORUS[name]
    u_t = sym.diff(u, _t)
    A = sym.simplify(u_t - sym.diff(u, _x, 2) - sym.diff(u, _y, 2))
    grad = [sym.diff(A, _x), sym.diff(A, _y)]
    lap = sym.diff(A, _x, 2) + sym.diff(A, _y, 2)
    funcs = dict(
        u=_compile(u), u_t=_compile(u_t), A=_compile(A), A_t=_compile(sym.diff(A, _t)),
        grad=[_compile(g) for g in grad], lap=_compile(lap),
    )
    return dim, funcs, A == 0


def source_expression(name: str):
    """Symbolic source of a torus catalog entry (for documentation and tests)."""
    if name in ELLIPTIC_TORUS:
        u = ELLIPTIC_TORUS[name][0]
        return sym.simplify(-(sym.diff(u, _x, 2) + sym.diff(u, _y, 2)))
    if name in PARABOLIC_TORUS:
        u = PARABOLIC_TORUS[name][0]
        return sym.simplify(sym.diff(u, _t) - sym.diff(u, _x, 2) - sym.diff(u, _y, 2))
    raise CatalogError(name)


def _torus_xy(m: ManifoldDescriptor, dim: int, name: str):
    if not isinstance(m, FlatTorus):
        raise CatalogError(f"{name!r} is a torus entry, got {m.kind}")
    if m.dimension < dim:
        raise CatalogError(f"{name!r} needs a {dim}-torus, got dimension {m.dimension}")
    if any(not math.isclose(L, TWO_PI) for L in m.lengths):
        raise CatalogError(f"{name!r} assumes side lengths 2*pi, got {m.lengths}")
    c = m.coordinates
    x = c[0]
    y = c[1] if m.dimension > 1 else np.zeros_like(x)
    return x, y


def _tangential(m: SphereMesh, g: np.ndarray, value: np.ndarray, degree: int) -> tuple:
    # homogeneous of degree l: radial derivative is l * P
    return tuple((g - degree * value[:, None] * m.vertices).T)


@dataclass
class EllipticPair:
    name: str
    manifold: ManifoldDescriptor
    u: np.ndarray
    A: np.ndarray
    grad_A: tuple[np.ndarray, ...]
    lap_A: np.ndarray

    @property
    def grad_A_sq(self) -> np.ndarray:
        return sum(g**2 for g in self.grad_A)


def elliptic_mms(catalog_id: str, m: ManifoldDescriptor) -> EllipticPair:
    """Closed-form ``u* > 0`` with ``A = -Delta u*`` and analytic ``grad A``, ``Delta A``."""
    if catalog_id in ELLIPTIC_TORUS:
        dim, u, A, grad, lap = _elliptic_torus_funcs(catalog_id)
        x, y = _torus_xy(m, dim, catalog_id)
        grad_A = tuple(g(x, y) for g in grad[: m.dimension]) + tuple(
            np.zeros_like(x) for _ in range(m.dimension - 2)
        )
        return EllipticPair(catalog_id, m, u(x, y), A(x, y), grad_A, lap(x, y))
    if catalog_id in ELLIPTIC_SPHERE:
        if not isinstance(m, SphereMesh):
            raise CatalogError(f"{catalog_id!r} is a sphere entry, got {m.kind}")
        c, P = ELLIPTIC_SPHERE[catalog_id]
        X = m.vertices
        lam = P.degree * (P.degree + 1)
        val = P.value(X)
        grad = _tangential(m, P.ambient_grad(X), val, P.degree)
        return EllipticPair(
            catalog_id, m, c + val, lam * val, tuple(lam * g for g in grad), -lam * lam * val
        )
    raise CatalogError(f"unknown elliptic catalog entry {catalog_id!r}")


class ParabolicSolution:
    """A manufactured ``u*(x, t)`` bound to a manifold, with its induced source."""

    def __init__(self, catalog_id: str, m: ManifoldDescriptor):
        self.name = catalog_id
        self.manifold = m
        if catalog_id in PARABOLIC_TORUS:
            dim, f, zero = _parabolic_torus_funcs(catalog_id)
            x, y = _torus_xy(m, dim, catalog_id)
            n = m.dimension
            self._u = lambda t: f["u"](x, y, t)
            self._u_t = lambda t: f["u_t"](x, y, t)
            A = lambda t: f["A"](x, y, t)
            grad = lambda t: tuple(g(x, y, t) for g in f["grad"][:n]) + tuple(
                np.zeros_like(x) for _ in range(n - 2)
            )
            self.source = (
                pa.SpaceTimeSource.zero(m)
                if zero
                else pa.SpaceTimeSource(
                    m, value=A, time_derivative=lambda t: f["A_t"](x, y, t),
                    gradient=grad, laplacian=lambda t: f["lap"](x, y, t), kind="analytic",
                )
            )
            self._A = A
        elif catalog_id in PARABOLIC_SPHERE:
            if not isinstance(m, SphereMesh):
                raise CatalogError(f"{catalog_id!r} is a sphere entry, got {m.kind}")
            c, P = PARABOLIC_SPHERE[catalog_id]
            X = m.vertices
            lam = P.degree * (P.degree + 1)
            val = P.value(X)
            tang = _tangential(m, P.ambient_grad(X), val, P.degree)
            # u = c + exp(-t) P  =>  A = (lam - 1) exp(-t) P
            k = lam - 1.0
            self._u = lambda t: c + np.exp(-t) * val
            self._u_t = lambda t: -np.exp(-t) * val
            self._A = lambda t: k * np.exp(-t) * val
            self.source = pa.SpaceTimeSource(
                m, value=self._A, time_derivative=lambda t: -k * np.exp(-t) * val,
                gradient=lambda t: tuple(k * np.exp(-t) * g for g in tang),
                laplacian=lambda t: -lam * k * np.exp(-t) * val, kind="analytic",
            )
        else:
            raise CatalogError(f"unknown parabolic catalog entry {catalog_id!r}")

    def u(self, t: float) -> np.ndarray:
        return self._u(t)

    def u_t(self, t: float) -> np.ndarray:
        return self._u_t(t)

    def A(self, t: float) -> np.ndarray:
        return self.source.A(t)

    def window(self, t: float, dt: float, *, exact_derivatives: bool = False) -> pa.TimeWindow:
        """Exact snapshots at ``t + j dt``; optionally exact ``u_t`` and ``A_t`` as well."""
        ts = [t + j * dt for j in range(-2, 3)]
        return pa.TimeWindow(
            t, dt,
            np.stack([self.u(s) for s in ts]),
            np.stack([self.A(s) for s in ts]),
            u_t=np.stack([self.u_t(s) for s in ts]) if exact_derivatives else None,
            A_t=self.source.A_t(t) if exact_derivatives else None,
        )

    def quotient_dt_complex_step(self, t: float, h: float = 1e-30) -> np.ndarray:
        """``d_t(A/u)`` by complex-step differentiation: exact to round-off, no cancellation."""
        tc = complex(t, h)
        return np.imag(self._A(tc) / self._u(tc)) / h


def parabolic_mms(catalog_id: str, m: ManifoldDescriptor) -> ParabolicSolution:
    return ParabolicSolution(catalog_id, m)


def band_limited_noise(
    m: FlatTorus, seed: int, *, max_mode: int | None = None, decay: float = 1.0
) -> np.ndarray:
    """Fixed-seed random field with modes ``|k_i| <= max_mode`` (default ``N/4``), sup-normalised."""
    rng = np.random.default_rng(seed)
    coeffs = rng.normal(size=m.shape) + 1j * rng.normal(size=m.shape)
    mask = np.ones(m.shape, dtype=bool)
    k2 = np.zeros(m.shape)
    for k, L, N in zip(m.wavenumbers, m.lengths, m.resolutions):
        index = np.abs(k) * L / TWO_PI
        mask &= index <= (N // 4 if max_mode is None else max_mode)
        k2 = k2 + index**2
    f = np.fft.ifftn(coeffs * mask / (1.0 + k2) ** decay).real
    return f / np.max(np.abs(f))


# ---------------------------------------------------------------------------
# refinement studies


def _torus(dim: int, N: int) -> FlatTorus:
    return build_flat_torus(dim, [TWO_PI] * dim, [N] * dim)


def _elliptic_residual(kind):
    def check(catalog_id: str, N: int, dt: float | None = None) -> float:
        dim = ELLIPTIC_TORUS[catalog_id][1]
        m = _torus(dim, N)
        pair = elliptic_mms(catalog_id, m)
        A = -dc.laplace_beltrami(m, pair.u)
        fn = el.q_identity_residual if kind == "q" else el.quotient_laplacian_residual
        return float(np.max(np.abs(fn(m, pair.u, A))))

    return check


def _bochner(catalog_id: str, N: int, dt: float | None = None) -> float:
    dim = max(2, ELLIPTIC_TORUS[catalog_id][1])
    m = _torus(dim, N)
    return float(np.max(np.abs(dc.bochner_residual(m, elliptic_mms(catalog_id, m).u))))


def _parabolic_residual(kind):
    def check(catalog_id: str, N: int, dt: float, t: float = 0.5) -> float:
        m = _torus(PARABOLIC_TORUS[catalog_id][1], N)
        sol = parabolic_mms(catalog_id, m)
        win = sol.window(t, dt)
        u, A = win.U(0), win.S(0)
        A_t = sol.source.A_t(t)
        if kind == "w":
            r = pa.w_heat_residual(m, u, win.ut(0), A)
        elif kind == "wt":
            r = pa.wt_evolution_residual(m, win)
        elif kind == "quot_evo":
            r = pa.quotient_evolution_residual(m, u, win.ut(0), A, A_t)
        elif kind == "quot_dt":
            r = pa.quotient_time_derivative_residual(u, win.ut(0), A, A_t, win.quotient_dt())
        else:
            r = pa.F_evolution_residual(m, win, a=2.0)
        return float(np.max(np.abs(r)))

    return check


# name -> (callable(catalog_id, N, dt), expected order, refinement variable)
CHECKS: dict[str, tuple[Callable, float, str]] = {
    "bochner": (_bochner, 4.0, "N"),
    "q_identity": (_elliptic_residual("q"), 4.0, "N"),
    "quotient_laplacian": (_elliptic_residual("quot"), 4.0, "N"),
    "w_heat": (_parabolic_residual("w"), 2.0, "dt"),
    "wt_evolution": (_parabolic_residual("wt"), 2.0, "dt"),
    "quotient_evolution": (_parabolic_residual("quot_evo"), 2.0, "dt"),
    "quotient_time_derivative": (_parabolic_residual("quot_dt"), 2.0, "dt"),
    "F_evolution": (_parabolic_residual("F"), 2.0, "dt"),
}


@dataclass
class StudyRow:
    level: int
    N: int
    dt: float
    residual: float
    order: float
    flagged: bool = False

    CSV_COLUMNS = ("level", "N", "dt", "residual", "order")

    def csv_row(self) -> dict:
        return {c: getattr(self, c) for c in self.CSV_COLUMNS}


def convergence_study(
    check: str | Callable[[int, float], float],
    levels: list[tuple[int, float]],
    *,
    catalog_id: str | None = None,
    expected_order: float | None = None,
    floor: float = 1e-11,
) -> list[StudyRow]:
    """Residual per ``(N, dt)`` level and the observed order between successive levels.

    The order is measured against ``dt`` when the levels differ in ``dt`` and
    against ``1/N`` otherwise. Pairs whose finer residual sits at or below
    ``floor`` are round-off saturated: their order is NaN and never flagged.
    A measured order below ``expected_order - 0.2`` is flagged.
    """
    if len(levels) < 3:
        raise ValueError(f"a convergence study needs >= 3 levels, got {len(levels)}")
    if isinstance(check, str):
        if check not in CHECKS:
            raise KeyError(f"unknown check {check!r}; choose from {sorted(CHECKS)}")
        fn, default_order, _ = CHECKS[check]
        if catalog_id is None:
            raise ValueError("named checks need a catalog_id")
        func = lambda N, dt: fn(catalog_id, N, dt)
        expected_order = default_order if expected_order is None else expected_order
    else:
        func = check
    by_dt = len({dt for _, dt in levels}) > 1
    rows: list[StudyRow] = []
    for i, (N, dt) in enumerate(levels):
        res = func(N, dt)
        order, flagged = float("nan"), False
        if i > 0:
            prev = rows[-1]
            ratio = prev.dt / dt if by_dt else N / prev.N
            if res > floor and prev.residual > floor:
                order = math.log(prev.residual / res) / math.log(ratio)
                flagged = expected_order is not None and order < expected_order - 0.2
        rows.append(StudyRow(i, N, dt, res, order, flagged))
    return rows
