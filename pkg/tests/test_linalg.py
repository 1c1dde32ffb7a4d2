import numpy as np
import pytest
import scipy.sparse as sp

from phifem.linalg import (
    ConvergenceError,
    SingularMatrixError,
    SolverError,
    as_csr,
    condition_number_2,
    extreme_singular_values,
    factorize,
    solve,
)


def random_sparse_system(n, seed, density=0.1):
    rng = np.random.default_rng(seed)
    A = sp.random(n, n, density=density, random_state=rng, format="csr")
    A = A + sp.diags(np.abs(A).sum(axis=1).A1 + 1.0)  # diagonally dominant
    return A.tocsr(), rng.standard_normal(n)


def dense_cond(A):
    s = np.linalg.svd(np.asarray(A.todense() if sp.issparse(A) else A), compute_uv=False)
    return s[0] / s[-1]


def test_identity_solve():
    b = np.arange(5.0)
    rep = solve(sp.identity(5), b)
    np.testing.assert_array_equal(rep.x, b)
    assert rep.residual == 0


def test_two_by_two():
    rep = solve(np.array([[2.0, 1.0], [1.0, 3.0]]), np.array([3.0, 4.0]))
    np.testing.assert_allclose(rep.x, [1.0, 1.0], atol=1e-15)


def test_matches_dense_oracle():
    A, b = random_sparse_system(50, 0)
    x = solve(A, b).x
    np.testing.assert_allclose(x, np.linalg.solve(A.toarray(), b), atol=1e-10)


def test_random_systems_residual():
    for seed in range(100):
        A, b = random_sparse_system(40, seed)
        rep = solve(A, b, tol=1e-10)
        assert np.linalg.norm(A @ rep.x - b) <= 1e-10 * np.linalg.norm(b)


def test_solve_is_deterministic():
    A, b = random_sparse_system(60, 3)
    assert solve(A, b).x.tobytes() == solve(A, b).x.tobytes()


def test_zero_rhs():
    A, _ = random_sparse_system(10, 1)
    rep = solve(A, np.zeros(10))
    assert not rep.x.any() and rep.residual == 0


@pytest.mark.parametrize("tol", [0.0, 1e-3, -1.0])
def test_tolerance_range(tol):
    with pytest.raises(ValueError):
        solve(sp.identity(3), np.ones(3), tol=tol)


def test_singular_matrix():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SingularMatrixError):
        solve(A, np.ones(2))
    with pytest.raises(SingularMatrixError):
        solve(sp.csr_matrix((3, 3)), np.ones(3))


def test_shape_and_value_checks():
    with pytest.raises(ValueError):
        solve(np.ones((2, 3)), np.ones(2))
    with pytest.raises(ValueError):
        solve(np.eye(2), np.ones(3))
    with pytest.raises(ValueError):
        as_csr(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_unreachable_tolerance_raises():
    # entries spanning 16 orders of magnitude leave a residual floor near 1e-16 * |A||x| / |b|
    A = sp.csr_matrix(np.array([[1e16, 1.0], [1.0, 1e-16]]))
    try:
        rep = solve(A, np.array([1.0, 1.0]), tol=1e-10)
    except SolverError as exc:
        assert "residual" in str(exc) or isinstance(exc, SingularMatrixError)
    else:
        assert rep.residual <= 1e-10


def test_as_csr_canonical():
    A = as_csr(sp.coo_matrix(([1.0, 2.0, 3.0], ([0, 0, 1], [1, 1, 0])), shape=(2, 2)))
    assert A.has_canonical_format and A[0, 1] == 3.0


def test_condition_identity_and_diagonal():
    assert abs(condition_number_2(sp.identity(7)) - 1.0) < 1e-12
    assert abs(condition_number_2(sp.diags([2.0, 0.5])) - 4.0) < 4e-4


@pytest.mark.parametrize("seed", range(5))
def test_condition_matches_dense_svd(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((30, 30))
    est = condition_number_2(A)
    assert abs(est - dense_cond(A)) <= 1e-3 * dense_cond(A)


def test_condition_permutation_and_scaling_invariance():
    rng = np.random.default_rng(9)
    A = sp.csr_matrix(rng.standard_normal((30, 30)))
    ref = condition_number_2(A)
    perm = rng.permutation(30)
    P = sp.identity(30, format="csr")[perm]
    assert abs(condition_number_2(P @ A @ P.T) - ref) <= 1e-4 * ref
    for c in (-3.0, 1e-5, 7e4):
        assert abs(condition_number_2(c * A) - ref) <= 1e-4 * ref


def test_extreme_singular_values_and_lu_reuse():
    A, _ = random_sparse_system(80, 4)
    s = np.linalg.svd(A.toarray(), compute_uv=False)
    smax, smin, stats = extreme_singular_values(A, lu=factorize(A))
    assert abs(smax - s[0]) <= 1e-4 * s[0] and abs(smin - s[-1]) <= 1e-4 * s[-1]
    assert stats["iterations_max"] >= 1 and stats["iterations_min"] >= 1


def test_condition_non_convergence_carries_estimate():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((30, 30))
    with pytest.raises(ConvergenceError) as info:
        condition_number_2(A, tol=1e-12, max_iter=2)
    assert info.value.estimate is not None and np.isfinite(info.value.estimate)


def test_condition_singular():
    with pytest.raises(SingularMatrixError):
        condition_number_2(sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])))
