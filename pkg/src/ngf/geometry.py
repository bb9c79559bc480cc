"""Grid domains on the unit square/cube and interior/boundary selection.

Vertices are ordered row-major: for a 2D grid the flat index of the vertex at
axis indices ``(i, j)`` is ``i * n + j`` and its coordinates are
``(i * spacing, j * spacing)``. Every array serialized by this package uses
this ordering.

The selection maps ``K`` (interior) and ``S`` (boundary) are never
materialized; they are kept as sorted index arrays and applied by gather and
scatter.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractViolation


@dataclass(frozen=True, eq=False)
class Domain:
    """A regular grid with an interior/boundary partition.

    Attributes
    ----------
    dim : int
        Spatial dimension (2 or 3).
    shape : tuple of int
        Vertices per axis.
    spacing : float
        Grid spacing, ``1 / (n - 1)``.
    points : ndarray of shape (n_vertices, dim)
    interior_idx, boundary_idx : ndarray of int
        Sorted vertex indices; rows of ``K`` and ``S`` respectively.
    boundary_ring_width : int
        Number of vertex rings counted as boundary.
    """

    dim: int
    shape: tuple
    spacing: float
    points: np.ndarray = field(repr=False)
    interior_idx: np.ndarray = field(repr=False)
    boundary_idx: np.ndarray = field(repr=False)
    boundary_ring_width: int = 1

    @property
    def n_vertices(self) -> int:
        return self.points.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary_idx.shape[0]

    @property
    def n_interior(self) -> int:
        return self.interior_idx.shape[0]

    @property
    def domain_id(self) -> str:
        dims = "x".join(str(n) for n in self.shape)
        return f"grid{self.dim}d-{dims}-ring{self.boundary_ring_width}"

    def is_boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_idx] = True
        return mask


def build_grid_domain(n_per_axis: int, dim: int = 2, boundary_ring_width: int = 1,
                      allow_degenerate: bool = False) -> Domain:
    """Build an ``n_per_axis**dim`` grid on ``[0, 1]**dim``.

    A vertex is on the boundary iff any of its axis indices is
    ``< boundary_ring_width`` or ``>= n_per_axis - boundary_ring_width``.
    """
    n = int(n_per_axis)
    ring = int(boundary_ring_width)
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if n < 2:
        raise ValueError(f"n_per_axis must be >= 2, got {n}")
    if ring < 1:
        raise ValueError(f"boundary_ring_width must be >= 1, got {ring}")
    if 2 * ring >= n and not allow_degenerate:
        raise ValueError(
            f"boundary_ring_width={ring} leaves no interior vertex on a grid "
            f"with {n} vertices per axis (pass allow_degenerate=True to allow)"
        )

    spacing = 1.0 / (n - 1)
    axes = np.indices((n,) * dim).reshape(dim, -1).T
    points = axes * spacing
    on_ring = ((axes < ring) | (axes >= n - ring)).any(axis=1)
    boundary_idx = np.flatnonzero(on_ring)
    interior_idx = np.flatnonzero(~on_ring)
    for arr in (points, boundary_idx, interior_idx):
        arr.setflags(write=False)
    return Domain(dim=dim, shape=(n,) * dim, spacing=spacing, points=points,
                  interior_idx=interior_idx, boundary_idx=boundary_idx,
                  boundary_ring_width=ring)


def _check_length(values, expected, what):
    values = np.asarray(values)
    if values.shape[0] != expected:
        raise ContractViolation(f"{what}: expected length {expected}, got {values.shape[0]}")
    return values


def select_interior(values, domain: Domain) -> np.ndarray:
    """``K @ values``."""
    return _check_length(values, domain.n_vertices, "select_interior")[domain.interior_idx]


def select_boundary(values, domain: Domain) -> np.ndarray:
    """``S @ values``."""
    return _check_length(values, domain.n_vertices, "select_boundary")[domain.boundary_idx]


def scatter_interior(values, domain: Domain) -> np.ndarray:
    """``K.T @ values``: embed interior values into a zero vertex vector."""
    values = _check_length(values, domain.n_interior, "scatter_interior")
    out = np.zeros((domain.n_vertices,) + values.shape[1:], dtype=np.result_type(values, float))
    out[domain.interior_idx] = values
    return out


def scatter_boundary(values, domain: Domain) -> np.ndarray:
    """``S.T @ values``."""
    values = _check_length(values, domain.n_boundary, "scatter_boundary")
    out = np.zeros((domain.n_vertices,) + values.shape[1:], dtype=np.result_type(values, float))
    out[domain.boundary_idx] = values
    return out


def grid_values(values, domain: Domain) -> np.ndarray:
    """Reshape a vertex vector to the grid's axis layout."""
    return _check_length(values, domain.n_vertices, "grid_values").reshape(domain.shape)
