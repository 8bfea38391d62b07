"""
Dense complex linear algebra kernels.
Triangular solves, Cholesky certification, matrix exponential, spectral
membership tests and seeded random unitaries used by every other module.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import numpy.typing as npt
import scipy.linalg as sla

from errors import (
    DimensionMismatch,
    NoConvergence,
    NotPositiveDefinite,
    NumericalError,
    Overflow,
    SingularMatrix,
)

logger = logging.getLogger(__name__)

ComplexMatrix = npt.NDArray[np.complex128]


@dataclass(frozen=True)
class Tolerance:
    """Residual bounds shared by every check."""

    rel: float = 1e-10
    abs: float = 1e-13
    cond_warn: float = 1e12

    def __post_init__(self):
        if self.rel < 0 or self.abs < 0:
            raise ValueError("Tolerance rel and abs must be nonnegative")
        if self.cond_warn < 1:
            raise ValueError("Tolerance cond_warn must be at least 1")

    def scaled(self, factor: float) -> float:
        """Relative bound for a quantity of the given magnitude."""
        return self.rel * max(1.0, factor) + self.abs


DEFAULT_TOLERANCE = Tolerance()


def as_matrix(data, name: str = "matrix") -> ComplexMatrix:
    """
    Coerce nested numbers into a finite 2-D complex matrix.

    Args:
        data: array-like with two axes
        name: field name used in error messages

    Returns:
        A fresh complex128 array
    """
    matrix = np.array(data, dtype=np.complex128)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise DimensionMismatch(f"expected a non-empty 2-D matrix, got shape {matrix.shape}", field=name)
    if not np.all(np.isfinite(matrix)):
        raise NumericalError(f"{name}: matrix has non-finite entries")
    return matrix


def _require_square(a: ComplexMatrix, name: str = "A") -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}", field=name)


def frobenius(a: ComplexMatrix) -> float:
    return float(np.linalg.norm(a, "fro"))


def identity(m: int) -> ComplexMatrix:
    return np.eye(m, dtype=np.complex128)


@dataclass(frozen=True)
class LUFactor:
    """Row-pivoted triangular factorization of a square matrix."""

    lu: ComplexMatrix
    piv: npt.NDArray[np.int32]
    condition: float

    def solve(self, b: ComplexMatrix) -> ComplexMatrix:
        if b.shape[0] != self.lu.shape[0]:
            raise DimensionMismatch(f"right-hand side has {b.shape[0]} rows, expected {self.lu.shape[0]}", field="B")
        return sla.lu_solve((self.lu, self.piv), b)

    def solve_right(self, b: ComplexMatrix) -> ComplexMatrix:
        """Return X with X·A = B."""
        return sla.lu_solve((self.lu, self.piv), b.conj().T, trans=2).conj().T


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular L with positive diagonal, A = L·L*."""

    lower: ComplexMatrix
    asymmetry: float = 0.0

    def solve(self, b: ComplexMatrix) -> ComplexMatrix:
        return sla.cho_solve((self.lower, True), b)

    def solve_right(self, b: ComplexMatrix) -> ComplexMatrix:
        """Return X with X·A = B (A Hermitian, so X = (A⁻¹B*)*)."""
        return sla.cho_solve((self.lower, True), b.conj().T).conj().T

    def reconstruct(self) -> ComplexMatrix:
        return self.lower @ self.lower.conj().T

    @property
    def condition(self) -> float:
        diag = np.abs(np.diag(self.lower))
        return float((diag.max() / diag.min()) ** 2)


def _row_permutation(piv: Sequence[int], n: int) -> npt.NDArray[np.int64]:
    perm = np.arange(n)
    for i, p in enumerate(piv):
        perm[i], perm[p] = perm[p], perm[i]
    return perm


def lu_factorize(a: ComplexMatrix, tol: Optional[Tolerance] = None) -> LUFactor:
    """
    Factor a square matrix with partial pivoting and certify its pivots.

    Args:
        a: square complex matrix
        tol: tolerance; a pivot below tol.abs times its row scale is singular

    Returns:
        LUFactor carrying a condition estimate
    """
    tol = tol or DEFAULT_TOLERANCE
    _require_square(a)
    n = a.shape[0]
    lu, piv = sla.lu_factor(a, check_finite=True)
    row_scale = np.abs(a).max(axis=1)
    perm = _row_permutation(piv, n)
    pivots = np.abs(np.diag(lu))
    for i in range(n):
        if pivots[i] <= tol.abs * row_scale[perm[i]] or pivots[i] == 0.0:
            raise SingularMatrix(f"pivot {i} is {pivots[i]:.3e} (row scale {row_scale[perm[i]]:.3e})")
    condition = float(np.linalg.cond(a))
    if condition > tol.cond_warn:
        logger.warning("Ill-conditioned solve: condition estimate %.3e exceeds %.1e", condition, tol.cond_warn)
    return LUFactor(lu=lu, piv=piv, condition=condition)


def solve(a: ComplexMatrix, b: ComplexMatrix, tol: Optional[Tolerance] = None) -> ComplexMatrix:
    """Solve A·X = B through a row-pivoted triangular factorization."""
    _require_square(a)
    if b.ndim != 2 or b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"B has shape {b.shape}, A has {a.shape[0]} rows", field="B")
    return lu_factorize(a, tol).solve(b)


def hermitian_residual(a: ComplexMatrix) -> float:
    """‖A − A*‖_F / max(1, ‖A‖_F)."""
    _require_square(a)
    return frobenius(a - a.conj().T) / max(1.0, frobenius(a))


def cholesky(a: ComplexMatrix, tol: Optional[Tolerance] = None) -> CholeskyFactor:
    """
    Certify positive definiteness of a Hermitian matrix.

    The input is symmetrized to (A + A*)/2 first; the discarded asymmetry is
    kept on the factor and logged when it exceeds tol.rel.

    Args:
        a: square matrix, Hermitian up to roundoff
        tol: tolerance; pivots L_ii² ≤ tol.abs·‖A‖_F count as non-positive

    Returns:
        CholeskyFactor with L·L* = (A + A*)/2
    """
    tol = tol or DEFAULT_TOLERANCE
    _require_square(a)
    asymmetry = hermitian_residual(a)
    if asymmetry > tol.rel:
        logger.warning("Symmetrizing matrix before Cholesky (Hermitian residual %.3e)", asymmetry)
    hermitian = (a + a.conj().T) / 2
    try:
        lower = sla.cholesky(hermitian, lower=True, check_finite=True)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefinite(f"Cholesky failed: {e}") from e
    pivots = np.real(np.diag(lower)) ** 2
    floor = tol.abs * frobenius(hermitian)
    if np.any(pivots <= floor):
        i = int(np.argmin(pivots))
        raise NotPositiveDefinite(f"pivot {i} is {pivots[i]:.3e}, below {floor:.3e}")
    return CholeskyFactor(lower=lower, asymmetry=asymmetry)


def matrix_exponential(m: ComplexMatrix) -> ComplexMatrix:
    """e^M by Padé scaling-and-squaring."""
    _require_square(m, "M")
    with np.errstate(over="ignore", invalid="ignore"):
        result = sla.expm(m)
    if not np.all(np.isfinite(result)):
        raise Overflow(f"matrix exponential overflowed (‖M‖_F = {frobenius(m):.3e})")
    return np.asarray(result, dtype=np.complex128)


def smallest_singular_value(a: ComplexMatrix) -> float:
    """σ_min(A) from the full singular value list; 0 for exactly singular input."""
    _require_square(a)
    values = sla.svdvals(a, check_finite=True)
    return float(max(values[-1], 0.0))


def spectrum_diagnostic(a: ComplexMatrix, max_dim: int = 64) -> List[complex]:
    """
    Eigenvalue estimates via Hessenberg reduction and shifted QR.

    Args:
        a: square matrix of dimension at most max_dim
        max_dim: dimension bound for this diagnostic

    Returns:
        Eigenvalues sorted by (real, imag)

    Raises:
        NoConvergence: when the QR iteration does not converge
    """
    _require_square(a)
    if a.shape[0] > max_dim:
        raise DimensionMismatch(f"spectrum diagnostic is limited to dimension {max_dim}, got {a.shape[0]}")
    try:
        values = sla.eigvals(a, check_finite=True)
    except np.linalg.LinAlgError as e:
        raise NoConvergence(f"eigenvalue iteration did not converge: {e}") from e

    scale = max(1.0, frobenius(a))
    n = a.shape[0]
    for value in values:
        gap = smallest_singular_value(a - value * np.eye(n))
        if gap > 1e-8 * scale:
            logger.warning("Eigenvalue estimate %s has backward gap %.3e", value, gap)

    return sorted((complex(v) for v in values), key=lambda v: (round(v.real, 10), round(v.imag, 10)))


def random_unitary(m: int, seed: int) -> ComplexMatrix:
    """
    Seeded Haar-distributed unitary from the QR factorization of a complex Gaussian matrix.

    The phases of diag(R) are folded back into Q so the distribution is Haar
    and the result is a pure function of (m, seed).
    """
    if m < 1:
        raise DimensionMismatch(f"unitary dimension must be positive, got {m}")
    rng = np.random.default_rng(seed)
    gaussian = (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / np.sqrt(2)
    q, r = sla.qr(gaussian)
    d = np.diag(r)
    phases = d / np.abs(d)
    return np.asarray(q * phases, dtype=np.complex128)


def unitarity_residual(u: ComplexMatrix) -> float:
    """‖U·U* − I‖_F."""
    _require_square(u, "U")
    return frobenius(u @ u.conj().T - identity(u.shape[0]))
