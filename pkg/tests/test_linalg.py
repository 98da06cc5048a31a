import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from holireg.exceptions import (
    DegreesOfFreedomError,
    ParameterError,
    SingularMatrixError,
    StructuralError,
    UndefinedCorrelationError,
)
from holireg.linalg import (
    NearSingularWarning,
    condition_number,
    least_squares,
    normal_cdf,
    normal_quantile,
    pairwise_corr,
    sigma_tilde,
    sym_eigen,
)


def gauss_solve(A, b):
    """Gaussian elimination with partial pivoting; test oracle."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    n = len(b)
    for i in range(n):
        piv = i + int(np.argmax(np.abs(A[i:, i])))
        A[[i, piv]], b[[i, piv]] = A[[piv, i]], b[[piv, i]]
        for r in range(i + 1, n):
            f = A[r, i] / A[i, i]
            A[r, i:] -= f * A[i, i:]
            b[r] -= f * b[i]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - A[i, i + 1:] @ x[i + 1:]) / A[i, i]
    return x


def erf_quantile(p):
    """Standard-normal quantile by bisection on math.erf; test oracle."""
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * (1 + math.erf(mid / math.sqrt(2))) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def random_symmetric(rng, p):
    A = rng.normal(size=(p, p))
    return A + A.T


# -- eigen-decomposition ----------------------------------------------------

def test_eigen_tridiagonal_closed_form():
    A = np.array([[2.0, 1, 0], [1, 2, 1], [0, 1, 2]])
    eig = sym_eigen(A)
    r2 = math.sqrt(2)
    assert np.allclose(eig.values, [2 - r2, 2, 2 + r2], atol=1e-12)


def test_eigen_matches_characteristic_polynomial_roots(rng):
    for _ in range(20):
        A = random_symmetric(rng, 4)
        roots = np.sort(np.roots(np.poly(A)).real)
        assert np.allclose(sym_eigen(A).values, roots, atol=1e-8)


def test_eigen_reconstruction_and_orthonormality(rng):
    for _ in range(100):
        p = int(rng.integers(1, 12))
        A = random_symmetric(rng, p)
        eig = sym_eigen(A)
        scale = max(np.linalg.norm(A), 1.0)
        assert np.linalg.norm(eig.reconstruct() - A) <= 1e-10 * scale
        assert np.allclose(eig.vectors.T @ eig.vectors, np.eye(p), atol=1e-10)
        assert np.all(np.diff(eig.values) >= 0)


def test_eigen_diagonal_and_zero():
    eig = sym_eigen(np.diag([3.0, -1.0, 2.0]))
    assert np.allclose(eig.values, [-1, 2, 3])
    assert np.allclose(sym_eigen(np.zeros((3, 3))).values, 0)


def test_eigen_deterministic_signs(rng):
    A = random_symmetric(rng, 6)
    e1, e2 = sym_eigen(A), sym_eigen(A.copy())
    assert np.array_equal(e1.vectors, e2.vectors)
    idx = np.argmax(np.abs(e1.vectors), axis=0)
    assert np.all(e1.vectors[idx, np.arange(6)] > 0)


def test_eigen_rejects_bad_input():
    with pytest.raises(StructuralError):
        sym_eigen(np.ones((2, 3)))
    with pytest.raises(StructuralError):
        sym_eigen(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(StructuralError):
        sym_eigen(np.array([[np.nan, 0.0], [0.0, 1.0]]))


@given(arrays(np.float64, (5, 5), elements=st.floats(-100, 100)))
def test_eigen_property_reconstructs(M):
    A = M + M.T
    eig = sym_eigen(A)
    assert np.linalg.norm(eig.reconstruct() - A) <= 1e-9 * max(np.linalg.norm(A), 1.0)
    assert np.isclose(eig.values.sum(), np.trace(A), atol=1e-8 * max(np.abs(A).max(), 1))


# -- least squares ----------------------------------------------------------

def test_least_squares_matches_elimination(rng):
    for _ in range(20):
        n, p = int(rng.integers(10, 40)), int(rng.integers(1, 8))
        X = rng.normal(size=(n, p))
        y = rng.normal(size=n)
        ref = gauss_solve(X.T @ X, X.T @ y)
        assert np.allclose(least_squares(X, y), ref, atol=1e-10)


def test_least_squares_residual_orthogonal_to_qr_basis(rng):
    X = rng.normal(size=(50, 6))
    y = rng.normal(size=50)
    r = y - X @ least_squares(X, y)
    Q, _ = np.linalg.qr(X)
    assert np.abs(Q.T @ r).max() < 1e-10


def test_least_squares_exact_fit():
    X = np.array([[1.0, 0], [0, 1], [1, 1]])
    assert np.allclose(least_squares(X, X @ np.array([2.0, -3.0])), [2, -3])


def test_least_squares_singular_raises_or_falls_back(rng):
    X = rng.normal(size=(20, 2))
    X = np.column_stack([X, X[:, 0] + X[:, 1]])
    y = rng.normal(size=20)
    with pytest.raises(SingularMatrixError) as info:
        least_squares(X, y)
    assert info.value.condition > 1e10
    with pytest.warns(NearSingularWarning):
        b = least_squares(X, y, allow_fallback=True)
    ref = np.linalg.pinv(X) @ y
    assert np.allclose(b, ref, atol=1e-8)


def test_least_squares_shape_errors():
    with pytest.raises(StructuralError):
        least_squares(np.ones((3, 2)), np.ones(4))


def test_condition_number():
    assert np.isclose(condition_number(np.diag([4.0, 2.0, 1.0])), 4.0)
    assert condition_number(np.array([[1.0, 1.0], [1.0, 1.0]])) > 1e15


# -- sigma, correlation, quantiles -----------------------------------------

def test_sigma_tilde_definition(rng):
    X = rng.normal(size=(30, 3))
    y = rng.normal(size=30)
    r = y - X @ gauss_solve(X.T @ X, X.T @ y)
    assert np.isclose(sigma_tilde(X, y), math.sqrt(r @ r / 27))
    with pytest.raises(DegreesOfFreedomError):
        sigma_tilde(X[:3], y[:3])


def test_pairwise_corr(rng):
    a, b = rng.normal(size=40), rng.normal(size=40)
    ref = ((a - a.mean()) @ (b - b.mean())) / (40 * a.std() * b.std())
    assert np.isclose(pairwise_corr(a, b), ref)
    assert pairwise_corr(a, 3 * a + 1) == pytest.approx(1.0)
    assert pairwise_corr(a, -a) == pytest.approx(-1.0)
    with pytest.raises(UndefinedCorrelationError):
        pairwise_corr(a, np.ones(40))


@given(arrays(np.float64, 12, elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, 12, elements=st.floats(-1e3, 1e3)))
def test_pairwise_corr_bounded(a, b):
    try:
        r = pairwise_corr(a, b)
    except UndefinedCorrelationError:
        return
    assert -1.0 <= r <= 1.0


def test_normal_quantile_reference_value():
    # frozen from the erf-bisection oracle
    assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    assert abs(normal_quantile(0.975) - erf_quantile(0.975)) < 1e-9


@pytest.mark.parametrize("p", [1e-8, 0.001, 0.025, 0.3, 0.5, 0.8, 0.995, 1 - 1e-8])
def test_normal_quantile_matches_erf_oracle(p):
    assert abs(normal_quantile(p) - erf_quantile(p)) < 1e-8
    assert normal_cdf(normal_quantile(p)) == pytest.approx(p, rel=1e-9)


@given(st.floats(1e-6, 1 - 1e-6))
def test_normal_quantile_symmetry(p):
    assert normal_quantile(p) == pytest.approx(-normal_quantile(1 - p), abs=1e-9)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 2.0])
def test_normal_quantile_domain(p):
    with pytest.raises(ParameterError):
        normal_quantile(p)
