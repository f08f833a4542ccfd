"""Numerical checks of gradient estimates for positive solutions of
``-Delta u = A`` and ``(d_t - Delta) u = A`` on flat tori and the round sphere."""

from .geometry import (
    FlatTorus,
    ManifoldError,
    SphereMesh,
    build_flat_torus,
    build_unit_sphere_mesh,
    integrate,
)

__version__ = "0.1.0"

__all__ = [
    "FlatTorus",
    "ManifoldError",
    "SphereMesh",
    "build_flat_torus",
    "build_unit_sphere_mesh",
    "integrate",
]
