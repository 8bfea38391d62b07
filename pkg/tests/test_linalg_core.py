import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from errors import DimensionMismatch, NotPositiveDefinite, NumericalError, Overflow, SingularMatrix
from linalg_core import (
    Tolerance,
    as_matrix,
    cholesky,
    hermitian_residual,
    lu_factorize,
    matrix_exponential,
    random_unitary,
    smallest_singular_value,
    solve,
    spectrum_diagnostic,
    unitarity_residual,
)


def _random_matrix(seed: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))


class TestTolerance:
    def test_defaults(self):
        tol = Tolerance()
        assert (tol.rel, tol.abs, tol.cond_warn) == (1e-10, 1e-13, 1e12)

    def test_scaled_uses_unit_floor(self):
        tol = Tolerance(rel=1e-8, abs=0.0)
        assert tol.scaled(0.5) == pytest.approx(1e-8)
        assert tol.scaled(100.0) == pytest.approx(1e-6)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            Tolerance(rel=-1.0)


class TestAsMatrix:
    def test_rejects_vectors(self):
        with pytest.raises(DimensionMismatch):
            as_matrix([1, 2, 3], "v")

    def test_rejects_non_finite(self):
        with pytest.raises(NumericalError):
            as_matrix([[np.inf]], "x")


class TestSolve:
    @given(seed=st.integers(0, 10_000), n=st.integers(1, 6))
    @settings(max_examples=40, deadline=None)
    def test_residual_is_small(self, seed, n):
        a = _random_matrix(seed, n) + 3 * n * np.eye(n)
        b = _random_matrix(seed + 1, n)[:, :2] if n >= 2 else _random_matrix(seed + 1, 1)
        x = solve(a, b)
        assert np.linalg.norm(a @ x - b) <= 1e-12 * np.linalg.norm(a) * np.linalg.norm(x) + 1e-13

    def test_singular_matrix(self):
        with pytest.raises(SingularMatrix):
            solve(np.array([[1.0, 2.0], [2.0, 4.0]], dtype=complex), np.eye(2, dtype=complex))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            solve(np.eye(2, dtype=complex), np.ones((3, 1), dtype=complex))

    def test_solve_right(self):
        a = _random_matrix(3, 4) + 5 * np.eye(4)
        b = _random_matrix(4, 4)[:2, :]
        x = lu_factorize(a).solve_right(b)
        np.testing.assert_allclose(x @ a, b, atol=1e-12)


class TestHermitianResidual:
    def test_hermitian_matrix_is_zero(self):
        assert hermitian_residual(np.array([[2, 1 - 1j], [1 + 1j, 3]])) == 0.0

    def test_skew_real_matrix(self):
        assert hermitian_residual(np.array([[0, 1], [-1, 0]], dtype=complex)) == pytest.approx(2.0)

    def test_skew_hermitian_matrix(self):
        assert hermitian_residual(np.array([[0, 1j], [1j, 0]])) == pytest.approx(2.0)


class TestCholesky:
    @given(seed=st.integers(0, 10_000), n=st.integers(1, 6))
    @settings(max_examples=40, deadline=None)
    def test_reconstructs_positive_matrix(self, seed, n):
        x = _random_matrix(seed, n)
        a = x @ x.conj().T + np.eye(n)
        factor = cholesky(a)
        np.testing.assert_allclose(factor.reconstruct(), (a + a.conj().T) / 2, atol=1e-10 * np.linalg.norm(a))
        assert np.all(np.real(np.diag(factor.lower)) > 0)

    @given(seed=st.integers(0, 10_000), n=st.integers(1, 8), all_positive=st.booleans())
    @settings(max_examples=60, deadline=None)
    def test_succeeds_exactly_for_positive_spectrum(self, seed, n, all_positive):
        rng = np.random.default_rng(seed)
        eigenvalues = rng.uniform(0.1, 5.0, n)
        if not all_positive:
            eigenvalues *= rng.choice([-1.0, 1.0], n)
        q = random_unitary(n, seed)
        a = (q * eigenvalues) @ q.conj().T
        a = (a + a.conj().T) / 2
        positive = all(v.real > 0 for v in spectrum_diagnostic(a))
        try:
            cholesky(a)
            succeeded = True
        except NotPositiveDefinite:
            succeeded = False
        assert succeeded == positive

    def test_indefinite_matrix(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky(np.array([[1.0, 2.0], [2.0, 1.0]], dtype=complex))

    def test_zero_matrix(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky(np.zeros((2, 2), dtype=complex))

    def test_asymmetry_is_recorded(self):
        a = np.array([[2.0, 1e-6], [0.0, 2.0]], dtype=complex)
        factor = cholesky(a)
        assert factor.asymmetry > 0
        np.testing.assert_allclose(factor.reconstruct(), (a + a.conj().T) / 2)


class TestMatrixExponential:
    def test_zero_gives_identity(self):
        np.testing.assert_allclose(matrix_exponential(np.zeros((3, 3), dtype=complex)), np.eye(3), atol=1e-15)

    def test_diagonal(self):
        theta = np.array([0.3, -1.2])
        result = matrix_exponential(np.diag(1j * theta))
        np.testing.assert_allclose(result, np.diag(np.exp(1j * theta)), atol=1e-14)

    def test_scalar_fixture_exponential(self):
        # e^{i·1·2i} = e^{-2}
        result = matrix_exponential(np.array([[1j * 2j]]))
        assert result[0, 0] == pytest.approx(np.exp(-2.0), abs=1e-14)

    def test_overflow(self):
        with pytest.raises(Overflow):
            matrix_exponential(np.array([[1000.0]], dtype=complex))

    def test_rotation(self):
        theta = np.pi / 2
        result = matrix_exponential(np.array([[0, theta], [-theta, 0]], dtype=complex))
        np.testing.assert_allclose(result, [[0.0, 1.0], [-1.0, 0.0]], atol=1e-14)

    @given(seed=st.integers(0, 10_000), n=st.integers(1, 6), norm=st.floats(0.0, 10.0))
    @settings(max_examples=40, deadline=None)
    def test_inverse_of_anti_hermitian(self, seed, n, norm):
        x = _random_matrix(seed, n)
        h = (x + x.conj().T) / 2
        m = 1j * h * (norm / max(np.linalg.norm(h), 1e-300))
        product = matrix_exponential(m) @ matrix_exponential(-m)
        assert np.linalg.norm(product - np.eye(n)) <= 1e-10

    @given(seed=st.integers(0, 10_000), n=st.integers(1, 6), norm=st.floats(0.0, 2.0))
    @settings(max_examples=40, deadline=None)
    def test_inverse_of_general_matrix(self, seed, n, norm):
        x = _random_matrix(seed, n)
        m = x * (norm / np.linalg.norm(x))
        product = matrix_exponential(m) @ matrix_exponential(-m)
        assert np.linalg.norm(product - np.eye(n)) <= 1e-10

    @given(
        seed=st.integers(0, 10_000),
        n=st.integers(1, 6),
        s=st.floats(-1.0, 1.0),
        t=st.floats(-1.0, 1.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_semigroup(self, seed, n, s, t):
        x = _random_matrix(seed, n)
        h = (x + x.conj().T) / 2
        m = 5j * h / np.linalg.norm(h)
        combined = matrix_exponential((s + t) * m)
        split = matrix_exponential(s * m) @ matrix_exponential(t * m)
        assert np.linalg.norm(combined - split) <= 1e-10


class TestSpectrum:
    def test_sorted_eigenvalues(self):
        values = spectrum_diagnostic(np.diag([1.0, 2j]))
        assert values[0] == pytest.approx(2j)
        assert values[1] == pytest.approx(1.0)

    def test_dimension_bound(self):
        with pytest.raises(DimensionMismatch):
            spectrum_diagnostic(np.eye(5, dtype=complex), max_dim=4)

    def test_smallest_singular_value(self):
        assert smallest_singular_value(np.diag([3.0, 0.5])) == pytest.approx(0.5)


class TestRandomUnitary:
    @given(seed=st.integers(0, 2**31), m=st.integers(1, 8))
    @settings(max_examples=50, deadline=None)
    def test_unitary(self, seed, m):
        assert unitarity_residual(random_unitary(m, seed)) <= 1e-12

    def test_deterministic(self):
        np.testing.assert_array_equal(random_unitary(4, 17), random_unitary(4, 17))
        assert not np.allclose(random_unitary(4, 17), random_unitary(4, 18))

    def test_invalid_dimension(self):
        with pytest.raises(DimensionMismatch):
            random_unitary(0, 1)
