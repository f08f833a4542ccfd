"""Discrete compact manifolds: periodic flat tori and icosphere meshes.

Two concrete manifolds are supported. A flat torus carries a uniform periodic
grid on which differentiation is done spectrally; a unit-sphere icosphere
carries a cotangent stiffness matrix and a lumped circumcentric mass vector.

Fields on a manifold are plain ``numpy`` arrays whose shape equals
``manifold.shape``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np
import scipy.sparse as sp


class ManifoldError(ValueError):
    """Invalid manifold parameters or a field that does not live on a manifold."""


@dataclass(frozen=True, eq=False)
class FlatTorus:
    """Flat torus ``prod_i [0, L_i)`` sampled on a uniform periodic grid.

    Node ``j`` along axis ``i`` sits at ``x_j = j * L_i / N_i``.
    """

    dimension: int
    lengths: tuple[float, ...]
    resolutions: tuple[int, ...]
    ricci_bound: float = 0.0

    kind = "flat-torus"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolutions

    @property
    def node_count(self) -> int:
        return math.prod(self.resolutions)

    @property
    def volume(self) -> float:
        return math.prod(self.lengths)

    @property
    def cell_volume(self) -> float:
        return math.prod(L / N for L, N in zip(self.lengths, self.resolutions))

    @cached_property
    def weights(self) -> np.ndarray:
        return np.full(self.shape, self.cell_volume)

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Node coordinates, one broadcast-ready array per axis."""
        axes = [np.arange(N) * (L / N) for L, N in zip(self.lengths, self.resolutions)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Angular wavenumbers per axis, shaped to broadcast against the FFT grid."""
        out = []
        for i, (L, N) in enumerate(zip(self.lengths, self.resolutions)):
            k = 2.0 * np.pi * np.fft.fftfreq(N, d=L / N)
            shape = [1] * self.dimension
            shape[i] = N
            out.append(k.reshape(shape))
        return tuple(out)

    @cached_property
    def first_derivative_symbols(self) -> tuple[np.ndarray, ...]:
        """``i k`` per axis with the Nyquist entry zeroed."""
        out = []
        for k, N in zip(self.wavenumbers, self.resolutions):
            k = k.copy()
            k.flat[N // 2] = 0.0
            out.append(1j * k)
        return tuple(out)

    @cached_property
    def laplacian_symbol(self) -> np.ndarray:
        return -sum(k**2 for k in self.wavenumbers)


@dataclass(frozen=True, eq=False)
class SphereMesh:
    """Icosphere approximation of the unit sphere with cotangent calculus."""

    subdivision: int
    vertices: np.ndarray
    faces: np.ndarray
    stiffness: sp.csr_matrix
    areas: np.ndarray
    ricci_bound: float = 0.0
    dimension: int = field(default=2, init=False)

    kind = "unit-sphere-mesh"

    @property
    def shape(self) -> tuple[int, ...]:
        return (len(self.vertices),)

    @property
    def node_count(self) -> int:
        return len(self.vertices)

    @property
    def volume(self) -> float:
        return float(self.areas.sum())

    @property
    def weights(self) -> np.ndarray:
        return self.areas

    @property
    def coordinates(self) -> tuple[np.ndarray, ...]:
        return tuple(self.vertices.T)

    @cached_property
    def face_areas(self) -> np.ndarray:
        p0, p1, p2 = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)

    @cached_property
    def face_gradient_basis(self) -> np.ndarray:
        """Gradients of the three hat functions on each face, shape ``(F, 3, 3)``."""
        p = self.vertices[self.faces]
        normal = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        twice_area = np.linalg.norm(normal, axis=1)
        normal /= twice_area[:, None]
        grads = np.empty_like(p)
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            grads[:, i] = np.cross(normal, p[:, k] - p[:, j]) / twice_area[:, None]
        return grads

    @cached_property
    def face_to_vertex(self) -> sp.csr_matrix:
        """Area-weighted averaging from faces to their incident vertices."""
        nf = len(self.faces)
        rows = self.faces.ravel()
        cols = np.repeat(np.arange(nf), 3)
        vals = np.repeat(self.face_areas, 3)
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(self.node_count, nf))
        norm = np.asarray(mat.sum(axis=1)).ravel()
        return sp.diags(1.0 / norm) @ mat


ManifoldDescriptor = Union[FlatTorus, SphereMesh]


def build_flat_torus(
    n: int, lengths: list[float] | tuple[float, ...], resolutions: list[int] | tuple[int, ...]
) -> FlatTorus:
    """Flat ``n``-torus with side lengths ``lengths`` and ``resolutions`` nodes per axis."""
    if not 1 <= n <= 3:
        raise ManifoldError(f"torus dimension must be 1, 2 or 3, got {n}")
    lengths = tuple(float(L) for L in lengths)
    resolutions = tuple(int(N) for N in resolutions)
    if len(lengths) != n or len(resolutions) != n:
        raise ManifoldError(
            f"expected {n} lengths and resolutions, got {len(lengths)} and {len(resolutions)}"
        )
    for L in lengths:
        if not (L > 0 and math.isfinite(L)):
            raise ManifoldError(f"side lengths must be positive, got {L}")
    for N in resolutions:
        if N < 8 or N % 2:
            raise ManifoldError(f"resolutions must be even and >= 8, got {N}")
    return FlatTorus(n, lengths, resolutions)


def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=float,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return verts / np.linalg.norm(verts, axis=1, keepdims=True), faces


def _subdivide(verts: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    edges = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
    unique, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    mid = verts[unique[:, 0]] + verts[unique[:, 1]]
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    nf = len(faces)
    m01, m12, m20 = (inverse[i * nf:(i + 1) * nf] + len(verts) for i in range(3))
    a, b, c = faces.T
    new_faces = np.concatenate(
        [
            np.stack([a, m01, m20], axis=1),
            np.stack([b, m12, m01], axis=1),
            np.stack([c, m20, m12], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ]
    )
    return np.vstack([verts, mid]), new_faces


def cotangent_stiffness(verts: np.ndarray, faces: np.ndarray) -> sp.csr_matrix:
    """Symmetric positive semidefinite cotangent matrix ``S`` with ``Delta = -M^{-1} S``."""
    nv = len(verts)
    rows, cols, vals = [], [], []
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        w = 0.5 * _corner_cotangents(verts, faces, i)
        # angle at vertex i weights the opposite edge (j, k)
        rows += [faces[:, j], faces[:, k], faces[:, j], faces[:, k]]
        cols += [faces[:, k], faces[:, j], faces[:, j], faces[:, k]]
        vals += [-w, -w, w, w]
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nv, nv)
    )
    mat.sum_duplicates()
    return mat


def _corner_cotangents(verts: np.ndarray, faces: np.ndarray, i: int) -> np.ndarray:
    j, k = (i + 1) % 3, (i + 2) % 3
    u = verts[faces[:, j]] - verts[faces[:, i]]
    v = verts[faces[:, k]] - verts[faces[:, i]]
    return np.einsum("ij,ij->i", u, v) / np.linalg.norm(np.cross(u, v), axis=1)


def lumped_areas(verts: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Circumcentric (Voronoi) vertex areas; valid for non-obtuse meshes."""
    areas = np.zeros(len(verts))
    cots = [_corner_cotangents(verts, faces, i) for i in range(3)]
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        pi, pj, pk = (verts[faces[:, c]] for c in (i, j, k))
        part = np.sum((pi - pj) ** 2, axis=1) * cots[k] + np.sum((pi - pk) ** 2, axis=1) * cots[j]
        np.add.at(areas, faces[:, i], part / 8.0)
    return areas


def build_unit_sphere_mesh(subdivision: int) -> SphereMesh:
    """Icosphere with ``10 * 4**subdivision + 2`` vertices projected onto the unit sphere."""
    if subdivision < 2:
        raise ManifoldError(f"icosphere subdivision must be >= 2, got {subdivision}")
    verts, faces = _icosahedron()
    for _ in range(subdivision):
        verts, faces = _subdivide(verts, faces)
    return SphereMesh(
        subdivision=subdivision,
        vertices=verts,
        faces=faces,
        stiffness=cotangent_stiffness(verts, faces),
        areas=lumped_areas(verts, faces),
    )


def check_field(m: ManifoldDescriptor, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != m.shape:
        raise ManifoldError(f"field of shape {f.shape} does not live on manifold of shape {m.shape}")
    if not np.all(np.isfinite(f)):
        raise ManifoldError("field contains non-finite values")
    return f


def integrate(m: ManifoldDescriptor, f: np.ndarray) -> float:
    """Quadrature ``sum_j w_j f_j`` with the manifold's node weights."""
    f = check_field(m, f)
    return float(np.sum(m.weights * f))
