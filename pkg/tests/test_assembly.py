import numpy as np
import pytest
import scipy.linalg

from conftest import dense_laplacian_loops
from ngf.assembly import (assemble_biharmonic, assemble_laplacian, assemble_lumped_mass,
                          restrict)
from ngf.exceptions import ContractViolation
from ngf.geometry import build_grid_domain


def test_laplacian_three_by_three_center_row():
    d = build_grid_domain(3)
    row = assemble_laplacian(d).toarray()[4]
    assert row[4] == 16.0
    assert sorted(row[[1, 3, 5, 7]]) == [-4.0] * 4
    assert row[[0, 2, 6, 8]].tolist() == [0.0] * 4


@pytest.mark.parametrize("n", [3, 5, 8])
def test_laplacian_matches_loop_reference(n):
    d = build_grid_domain(n)
    assert np.array_equal(assemble_laplacian(d).toarray(), dense_laplacian_loops(n, d.spacing))


def test_laplacian_kills_constants_and_is_symmetric():
    d = build_grid_domain(10)
    L = assemble_laplacian(d)
    assert np.all(np.abs(L @ np.full(d.n_vertices, 3.7))[d.interior_idx] < 1e-9)
    assert abs(L - L.T).max() == 0.0


def test_laplacian_3d_row():
    d = build_grid_domain(3, dim=3)
    row = assemble_laplacian(d).toarray()[13]
    assert row[13] == 24.0
    assert np.count_nonzero(row == -4.0) == 6


def test_lumped_mass_three_by_three():
    m = assemble_lumped_mass(build_grid_domain(3)).reshape(3, 3)
    w = np.array([0.5, 1.0, 0.5]) * 0.5          # 1D trapezoid weights
    assert np.array_equal(m, np.outer(w, w))
    assert m[1, 1] == 0.25 and m[0, 1] == 0.125 and m[0, 0] == 0.0625
    assert m.sum() == 1.0


def test_lumped_mass_two_by_two_and_partition_of_unity():
    m2 = assemble_lumped_mass(build_grid_domain(2, allow_degenerate=True))
    assert m2.tolist() == [0.25] * 4
    m = assemble_lumped_mass(build_grid_domain(100))
    assert np.all(m > 0)
    assert abs(m.sum() - 1.0) < 1e-12
    assert abs(assemble_lumped_mass(build_grid_domain(7, dim=3)).sum() - 1.0) < 1e-12


def test_biharmonic_five_by_five_single_interior():
    d = build_grid_domain(5, 2, 2)
    KBK, _ = restrict(assemble_biharmonic(d), d)
    # hand composition: L row at centre has 4/h^2 and four -1/h^2; every
    # vertex touched has mass h^2 (h = 1/4)
    h = 0.25
    expected = ((4 / h ** 2) ** 2 + 4 * (1 / h ** 2) ** 2) / h ** 2
    assert KBK.shape == (1, 1)
    assert KBK.toarray()[0, 0] == expected == 81920.0


def test_biharmonic_matches_dense_composition():
    d = build_grid_domain(7, 2, 2)
    Ld = dense_laplacian_loops(7, d.spacing)
    m = assemble_lumped_mass(d)
    B = assemble_biharmonic(d).toarray()
    ref = Ld.T @ np.diag(1 / m) @ Ld
    assert np.max(np.abs(B - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_biharmonic_symmetric_kills_constants():
    d = build_grid_domain(12, 2, 2)
    B = assemble_biharmonic(d)
    assert abs(B - B.T).max() == 0.0
    assert np.max(np.abs((B @ np.ones(d.n_vertices))[d.interior_idx])) < 1e-6


def test_biharmonic_requires_two_rings():
    with pytest.raises(ContractViolation):
        assemble_biharmonic(build_grid_domain(6, 2, 1))


@pytest.mark.parametrize("n", [4, 9, 16, 32])
def test_restricted_operators_are_positive_definite(n):
    d = build_grid_domain(n)
    scipy.linalg.cholesky(restrict(assemble_laplacian(d), d)[0].toarray())
    if n >= 5:
        d2 = build_grid_domain(n, 2, 2)
        scipy.linalg.cholesky(restrict(assemble_biharmonic(d2), d2)[0].toarray())
