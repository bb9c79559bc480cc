"""Finite-difference operators and lumped masses on grid domains.

``assemble_laplacian`` discretizes ``-Laplacian`` with the (2*dim+1)-point
stencil scaled by ``1/h**2``. Rows of boundary vertices are assembled with the
same stencil, dropping neighbors that fall outside the grid; restriction to the
interior happens in :mod:`ngf.oracle`.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .exceptions import ContractViolation, SingularOperator
from .geometry import Domain

DENSE_PROBE_CAP = 4096


def assemble_laplacian(domain: Domain) -> sp.csr_matrix:
    """Sparse ``N_v x N_v`` matrix of the 5-point (2D) or 7-point (3D) ``-Laplacian``."""
    n = domain.shape[0]
    inv_h2 = 1.0 / domain.spacing ** 2
    idx = np.arange(domain.n_vertices).reshape(domain.shape)

    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [np.full(domain.n_vertices, 2 * domain.dim * inv_h2)]
    for axis in range(domain.dim):
        lo = [slice(None)] * domain.dim
        hi = [slice(None)] * domain.dim
        lo[axis] = slice(0, n - 1)
        hi[axis] = slice(1, n)
        a = idx[tuple(lo)].ravel()
        b = idx[tuple(hi)].ravel()
        rows += [a, b]
        cols += [b, a]
        vals += [np.full(a.size, -inv_h2)] * 2

    L = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(domain.n_vertices,) * 2).tocsr()
    L.sum_duplicates()
    L.sort_indices()
    return L


def assemble_lumped_mass(domain: Domain) -> np.ndarray:
    """Trapezoidal lumped masses, one per vertex; they sum to 1."""
    n = domain.shape[0]
    axes = np.indices(domain.shape).reshape(domain.dim, -1)
    clamped = ((axes == 0) | (axes == n - 1)).sum(axis=0)
    return domain.spacing ** domain.dim * 0.5 ** clamped


def assemble_biharmonic(domain: Domain, mass: np.ndarray | None = None,
                        laplacian: sp.csr_matrix | None = None) -> sp.csr_matrix:
    """``L.T @ diag(1/m) @ L`` for the grid Laplacian ``L`` and lumped masses ``m``.

    Requires two boundary rings so that value-only Dirichlet data pins the
    solution. The restricted operator is Cholesky-probed; failure raises
    :class:`SingularOperator`.
    """
    if domain.boundary_ring_width < 2:
        raise ContractViolation(
            f"biharmonic assembly needs boundary_ring_width >= 2, got {domain.boundary_ring_width}")
    L = assemble_laplacian(domain) if laplacian is None else laplacian
    m = assemble_lumped_mass(domain) if mass is None else np.asarray(mass)
    B = (L.T @ sp.diags(1.0 / m) @ L).tocsr()
    # exact symmetry: (a + b) / 2 == (b + a) / 2 bitwise
    B = ((B + B.T) * 0.5).tocsr()
    B.sum_duplicates()
    B.sort_indices()
    check_restricted_definite(B, domain)
    return B


def restrict(op: sp.spmatrix, domain: Domain):
    """Return ``(K op K.T, K op S.T)`` as CSR matrices."""
    op = sp.csr_matrix(op)
    rows = op[domain.interior_idx]
    return rows[:, domain.interior_idx].tocsr(), rows[:, domain.boundary_idx].tocsr()


def check_restricted_definite(op: sp.spmatrix, domain: Domain) -> None:
    """Raise :class:`SingularOperator` unless ``K op K.T`` is positive definite.

    Dense Cholesky up to ``DENSE_PROBE_CAP`` interior vertices; above that a
    shift-invert probe of the smallest eigenvalue.
    """
    if domain.n_interior == 0:
        return
    KLK, _ = restrict(op, domain)
    if domain.n_interior <= DENSE_PROBE_CAP:
        try:
            scipy.linalg.cholesky(KLK.toarray(), lower=True)
        except np.linalg.LinAlgError as exc:
            raise SingularOperator(f"restricted operator is not positive definite: {exc}") from exc
        return
    from scipy.sparse.linalg import eigsh
    try:
        lam = eigsh(KLK.tocsc(), k=1, sigma=0, which="LM", return_eigenvectors=False)[0]
    except (RuntimeError, np.linalg.LinAlgError) as exc:
        raise SingularOperator(f"restricted operator is singular: {exc}") from exc
    if not lam > 0:
        raise SingularOperator(f"restricted operator has eigenvalue {lam}")
