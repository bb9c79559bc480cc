"""Exact reference solutions for ``L u = M f`` subject to ``S u = h``.

Two independent routes are provided: a factorized solve of the interior
system, and an explicit Green's matrix ``G = (K L K^T)^{-1}`` applied to the
same right-hand side. The Green's matrix also has a symmetric eigen
decomposition ``G = Phi diag(1/lambda) Phi^T`` computed with an in-house
Jacobi iteration.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import restrict
from .exceptions import ContractViolation, DenseCapExceeded, NonPositiveSpectrum, SingularOperator
from .geometry import Domain

DEFAULT_DENSE_CAP = 4096


class RestrictedSystem:
    """Factorization of ``K L K^T`` reused across many ``(f, h)`` pairs.

    Dense Cholesky is used while the interior fits under ``dense_cap``;
    larger interiors fall back to a sparse LU with diagonal pivoting.
    """

    def __init__(self, L, mass, domain: Domain, dense_cap: int = DEFAULT_DENSE_CAP):
        self.domain = domain
        self.mass = np.asarray(mass, dtype=float)
        self.KLK, self.KLS = restrict(L, domain)
        self.dense = domain.n_interior <= dense_cap
        if domain.n_interior == 0:
            self._factor = None
        elif self.dense:
            try:
                self._factor = scipy.linalg.cho_factor(self.KLK.toarray(), lower=True)
            except np.linalg.LinAlgError as exc:
                raise SingularOperator(f"Cholesky of the restricted operator failed: {exc}") from exc
        else:
            try:
                self._factor = splu(self.KLK.tocsc(), permc_spec="MMD_AT_PLUS_A",
                                    diag_pivot_thresh=0.0)
            except RuntimeError as exc:
                raise SingularOperator(f"factorization of the restricted operator failed: {exc}") from exc

    def rhs(self, f, h) -> np.ndarray:
        """``K M f - K L S^T h``."""
        d = self.domain
        f = _check(f, d.n_vertices, "f")
        h = _check(h, d.n_boundary, "h")
        return (self.mass * f)[d.interior_idx] - self.KLS @ h

    def solve_interior(self, rhs) -> np.ndarray:
        if self._factor is None:
            return np.zeros(0)
        if self.dense:
            return scipy.linalg.cho_solve(self._factor, rhs)
        return self._factor.solve(rhs)

    def solve(self, f, h) -> np.ndarray:
        d = self.domain
        u = np.empty(d.n_vertices)
        u[d.interior_idx] = self.solve_interior(self.rhs(f, h))
        u[d.boundary_idx] = h
        return u

    def residual(self, u, f, h) -> float:
        """``||K L K^T u_int - rhs|| / ||rhs||`` (absolute when the rhs vanishes)."""
        rhs = self.rhs(f, h)
        r = self.KLK @ np.asarray(u)[self.domain.interior_idx] - rhs
        scale = np.linalg.norm(rhs)
        return float(np.linalg.norm(r) / scale) if scale > 0 else float(np.linalg.norm(r))


def _check(v, n, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ContractViolation(f"{name}: expected shape ({n},), got {v.shape}")
    return v


def solve_constrained(L, mass, f, h, domain: Domain) -> np.ndarray:
    """Solve ``L u = M f`` with ``S u = h`` by factorizing ``K L K^T``."""
    return RestrictedSystem(L, mass, domain).solve(f, h)


def greens_matrix(L, domain: Domain, dense_cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """Dense ``G = (K L K^T)^{-1}``, symmetrized."""
    if domain.n_interior > dense_cap:
        raise DenseCapExceeded(f"{domain.n_interior} interior vertices exceed dense cap {dense_cap}")
    KLK, _ = restrict(L, domain)
    try:
        factor = scipy.linalg.cho_factor(KLK.toarray(), lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularOperator(str(exc)) from exc
    G = scipy.linalg.cho_solve(factor, np.eye(domain.n_interior))
    return 0.5 * (G + G.T)


def greens_solve(G, L, mass, f, h, domain: Domain) -> np.ndarray:
    """``K^T G (K M f - K L S^T h) + S^T h`` with an explicit Green's matrix."""
    f = _check(f, domain.n_vertices, "f")
    h = _check(h, domain.n_boundary, "h")
    L = sp.csr_matrix(L)
    h_full = np.zeros(domain.n_vertices)
    h_full[domain.boundary_idx] = h
    load = np.asarray(mass) * f - L @ h_full
    u = h_full.copy()
    u[domain.interior_idx] = G @ load[domain.interior_idx]
    return u


def _round_robin(n):
    """Schedules of disjoint index pairs covering every pair once per sweep."""
    players = list(range(n + (n % 2)))
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        if pairs:
            p, q = np.array(pairs).T
            rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(A, tol: float = 1e-12, max_sweeps: int = 60):
    """Eigenvalues (ascending) and orthonormal eigenvectors of symmetric ``A``.

    Cyclic Jacobi rotations in round-robin order, so each round rotates
    ``n/2`` disjoint index pairs at once. Stops when the off-diagonal
    Frobenius norm drops below ``tol * ||A||_F``.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ContractViolation(f"expected a square matrix, got {A.shape}")
    V = np.eye(n)
    if n <= 1:
        return np.diag(A).copy(), V
    A = 0.5 * (A + A.T)
    scale = np.linalg.norm(A)
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * scale:
            break
        for p, q in rounds:
            apq = A[p, q]
            app = A[p, p]
            aqq = A[q, q]
            active = apq != 0.0
            theta = np.where(active, (aqq - app) / np.where(active, 2.0 * apq, 1.0), 0.0)
            t = np.where(active, np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0)), 0.0)
            t = np.where(active & (theta == 0.0), 1.0, t)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            Ap, Aq = A[p, :], A[q, :]
            A[p, :], A[q, :] = c[:, None] * Ap - s[:, None] * Aq, s[:, None] * Ap + c[:, None] * Aq
            Ap, Aq = A[:, p], A[:, q]
            A[:, p], A[:, q] = Ap * c - Aq * s, Ap * s + Aq * c
            Vp, Vq = V[:, p], V[:, q]
            V[:, p], V[:, q] = Vp * c - Vq * s, Vp * s + Vq * c
    else:
        raise ArithmeticError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def eigendecompose_restricted(L, domain: Domain, dense_cap: int = DEFAULT_DENSE_CAP):
    """Eigenpairs ``(Phi, lam)`` of ``K L K^T``; ``G = Phi diag(1/lam) Phi^T``."""
    if domain.n_interior > dense_cap:
        raise DenseCapExceeded(f"{domain.n_interior} interior vertices exceed dense cap {dense_cap}")
    KLK, _ = restrict(L, domain)
    lam, Phi = jacobi_eigh(KLK.toarray())
    if lam.size and not np.all(lam > 0):
        raise NonPositiveSpectrum(f"smallest eigenvalue {lam.min():.3e} is not positive")
    return Phi, lam


def low_rank_truncation_error(L, domain: Domain, rank: int) -> float:
    """Relative Frobenius error of the best rank-``rank`` approximation of ``G``.

    Keeps the ``rank`` largest ``1/lambda`` modes.
    """
    if not 0 <= rank <= domain.n_interior:
        raise ContractViolation(f"rank must lie in [0, {domain.n_interior}], got {rank}")
    _, lam = eigendecompose_restricted(L, domain)
    g2 = np.sort(1.0 / lam ** 2)[::-1]
    total = np.sum(g2)
    dropped = np.sum(g2[rank:]) if rank < g2.size else 0.0
    return float(np.sqrt(dropped / total))
