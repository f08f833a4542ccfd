"""Laplace-Beltrami, gradient and Hessian operators on the supported manifolds.

On a flat torus every operator is a Fourier multiplier, so identities between
them hold to round-off for band-limited data. On the sphere mesh the Laplacian
is the cotangent operator ``-M^{-1} S`` and gradients are area-weighted averages
of the piecewise-linear face gradients, projected onto the tangent plane.
Hessian-level quantities exist on the torus only.
"""

from __future__ import annotations

import numpy as np

from .geometry import FlatTorus, ManifoldDescriptor, SphereMesh, check_field


class CapabilityError(NotImplementedError):
    """Operation not available on this kind of manifold."""


def _require_torus(m: ManifoldDescriptor, what: str) -> FlatTorus:
    if not isinstance(m, FlatTorus):
        raise CapabilityError(f"{what} is only implemented on the flat torus, not on {m.kind}")
    return m


def _spectral(m: FlatTorus, f: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(symbol * np.fft.fftn(f)).real


def partial(m: FlatTorus, f: np.ndarray, axis: int) -> np.ndarray:
    f = check_field(m, f)
    return _spectral(m, f, m.first_derivative_symbols[axis])


def second_partial(m: FlatTorus, f: np.ndarray, i: int, j: int) -> np.ndarray:
    """``d_i d_j f``; the diagonal keeps the Nyquist mode so its trace is the Laplacian."""
    f = check_field(m, f)
    if i == j:
        return _spectral(m, f, -m.wavenumbers[i] ** 2)
    d = m.first_derivative_symbols
    return _spectral(m, f, d[i] * d[j])


def laplace_beltrami(m: ManifoldDescriptor, f: np.ndarray) -> np.ndarray:
    f = check_field(m, f)
    if isinstance(m, FlatTorus):
        return _spectral(m, f, m.laplacian_symbol)
    return -(m.stiffness @ f) / m.areas


def gradient(m: ManifoldDescriptor, f: np.ndarray) -> tuple[np.ndarray, ...]:
    """Gradient components: one per axis on the torus, three ambient ones on the sphere."""
    f = check_field(m, f)
    if isinstance(m, FlatTorus):
        return tuple(_spectral(m, f, d) for d in m.first_derivative_symbols)
    face_grad = np.einsum("fi,fij->fj", f[m.faces], m.face_gradient_basis)
    g = m.face_to_vertex @ face_grad
    x = m.vertices
    g -= np.einsum("ij,ij->i", g, x)[:, None] * x
    return tuple(g.T)


def gradient_inner(m: ManifoldDescriptor, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Pointwise ``(grad f, grad g)``."""
    if f is g:
        return gradient_norm_sq(m, f)
    return sum(a * b for a, b in zip(gradient(m, f), gradient(m, g)))


def gradient_norm_sq(m: ManifoldDescriptor, f: np.ndarray) -> np.ndarray:
    return sum(c**2 for c in gradient(m, f))


def dirichlet_form(m: ManifoldDescriptor, f: np.ndarray, g: np.ndarray) -> float:
    """``int (grad f, grad g)`` in the discretisation's own (Galerkin) sense.

    On the sphere this is ``f^T S g``, the exact integral of the piecewise-linear
    gradients; on the torus it is the quadrature of :func:`gradient_inner`.
    """
    f = check_field(m, f)
    g = check_field(m, g)
    if isinstance(m, SphereMesh):
        return float(f @ (m.stiffness @ g))
    return float(np.sum(m.weights * gradient_inner(m, f, g)))


def hessian(m: ManifoldDescriptor, f: np.ndarray) -> list[list[np.ndarray]]:
    m = _require_torus(m, "hessian")
    n = m.dimension
    H = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            H[i][j] = H[j][i] = second_partial(m, f, i, j)
    return H


def hessian_frobenius_sq(m: ManifoldDescriptor, f: np.ndarray) -> np.ndarray:
    """``|D^2 f|^2`` on the flat torus, where the covariant Hessian is the matrix of partials."""
    H = hessian(m, f)
    return sum(H[i][j] ** 2 for i in range(m.dimension) for j in range(m.dimension))


def bochner_residual(m: ManifoldDescriptor, f: np.ndarray) -> np.ndarray:
    """``Delta|grad f|^2 - 2|D^2 f|^2 - 2(grad f, grad Delta f)``; the Ricci term vanishes on a flat torus."""
    m = _require_torus(m, "bochner_residual")
    lap = laplace_beltrami(m, f)
    return (
        laplace_beltrami(m, gradient_norm_sq(m, f))
        - 2.0 * hessian_frobenius_sq(m, f)
        - 2.0 * gradient_inner(m, f, lap)
    )


def hessian_trace_margin(m: ManifoldDescriptor, f: np.ndarray) -> np.ndarray:
    """``|D^2 f|^2 - (Delta f)^2 / n``, nonnegative by Cauchy-Schwarz on the trace."""
    m = _require_torus(m, "hessian_trace_margin")
    H = hessian(m, f)
    n = m.dimension
    trace = sum(H[i][i] for i in range(n))
    return sum(H[i][j] ** 2 for i in range(n) for j in range(n)) - trace**2 / n
