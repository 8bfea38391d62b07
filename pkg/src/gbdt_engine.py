"""
Generalized Bäcklund-Darboux transformation of discrete Dirac systems.

Given a triple {α, S₀, Λ₀} with αS₀ − S₀α* = iΛ₀Λ₀* and an initial potential
{C_k}, this module runs

    Λ_{k+1} = Λ_k + iα⁻¹Λ_kC_k
    S_{k+1} = S_k + α⁻¹S_k(α*)⁻¹ + α⁻¹Λ_kC_kΛ_k*(α*)⁻¹
    C̃_k     = C_k + Λ_k*S_k⁻¹Λ_k − Λ_{k+1}*S_{k+1}⁻¹Λ_{k+1}

and evaluates the Darboux matrix w_α(k, z) = I − iΛ_k*S_k⁻¹(α − zI)⁻¹Λ_k,
the transformed fundamental solution (directly and through
w̃(k, z) = w_α(k, −z) w(k, z) w_α(0, −z)⁻¹) and the unitary factors
C̃_k = W_k* j W_k. Every identity the construction relies on is exposed as a
residual so callers can verify it at runtime.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg as sla

from dirac_system import (
    DiracPotential,
    FundamentalTrajectory,
    fundamental_solution,
    step_matrix,
    validate_potential,
)
from errors import (
    DimensionMismatch,
    FactorizationFailure,
    GbdtError,
    NoConvergence,
    NotPositiveDefinite,
    NumericalBreakdown,
    NumericalError,
    Overflow,
    SingularMatrix,
    SingularS,
    SpectralCollision,
    ZeroSpectralParameter,
)
from linalg_core import (
    DEFAULT_TOLERANCE,
    CholeskyFactor,
    ComplexMatrix,
    LUFactor,
    Tolerance,
    as_matrix,
    cholesky,
    frobenius,
    hermitian_residual,
    identity,
    lu_factorize,
    smallest_singular_value,
    spectrum_diagnostic,
    unitarity_residual,
)

logger = logging.getLogger(__name__)

Mode = Literal["strict", "weak"]
MODES = ("strict", "weak")


@dataclass(frozen=True)
class VerificationBounds:
    """Pass/fail thresholds of the runtime identity checks, derived from a Tolerance."""

    identity: float
    involution: float
    conjugation: float
    intertwining: float
    transfer_inverse: float
    factorization: float
    stationary: float
    nonstationary: float

    @classmethod
    def from_tolerance(cls, tol: Tolerance) -> "VerificationBounds":
        return cls(
            identity=10 * tol.rel,
            involution=10 * tol.rel,
            conjugation=100 * tol.rel,
            intertwining=10 * tol.rel,
            transfer_inverse=tol.rel,
            factorization=10 * tol.rel,
            stationary=10 * tol.rel,
            nonstationary=100 * tol.rel,
        )


@dataclass(frozen=True)
class GbdtTriple:
    """{α, S₀, Λ₀} with α n×n, S₀ n×n, Λ₀ n×m."""

    alpha: ComplexMatrix
    s0: ComplexMatrix
    lambda0: ComplexMatrix
    mode: Mode = "strict"

    def __post_init__(self):
        _check_triple_shapes(self.alpha, self.s0, self.lambda0)
        if self.mode not in MODES:
            raise DimensionMismatch(f"mode must be one of {MODES}, got {self.mode!r}", field="mode")

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @property
    def m(self) -> int:
        return self.lambda0.shape[1]


def make_triple(alpha, s0, lambda0, mode: Mode = "strict") -> GbdtTriple:
    """Coerce array-likes into a GbdtTriple."""
    return GbdtTriple(
        alpha=as_matrix(alpha, "alpha"),
        s0=as_matrix(s0, "s0"),
        lambda0=as_matrix(lambda0, "lambda0"),
        mode=mode,
    )


def _check_triple_shapes(alpha: ComplexMatrix, s0: ComplexMatrix, lambda0: ComplexMatrix) -> None:
    if alpha.ndim != 2 or alpha.shape[0] != alpha.shape[1]:
        raise DimensionMismatch(f"alpha must be square, got {alpha.shape}", field="alpha")
    n = alpha.shape[0]
    if s0.shape != (n, n):
        raise DimensionMismatch(f"s0 must be {n}×{n}, got {s0.shape}", field="s0")
    if lambda0.ndim != 2 or lambda0.shape[0] != n:
        raise DimensionMismatch(f"lambda0 must have {n} rows, got {lambda0.shape}", field="lambda0")


def spectral_threshold(alpha: ComplexMatrix, tol: Tolerance) -> float:
    """Distance below which z counts as a point of σ(α)."""
    return tol.rel * frobenius(alpha) + tol.abs


def identity_defect(alpha: ComplexMatrix, s: ComplexMatrix, lam: ComplexMatrix) -> Tuple[float, float]:
    """(‖αS − Sα* − iΛΛ*‖_F, ‖α‖‖S‖ + ‖Λ‖²)."""
    defect = alpha @ s - s @ alpha.conj().T - 1j * (lam @ lam.conj().T)
    scale = frobenius(alpha) * frobenius(s) + frobenius(lam) ** 2
    return frobenius(defect), scale


# ---------------------------------------------------------------------------
# Admissibility
# ---------------------------------------------------------------------------


@dataclass
class AdmissibilityReport:
    """Outcome of validate_triple."""

    mode: str
    identity_residual: float = 0.0
    identity_scale: float = 0.0
    s0_hermitian_residual: float = 0.0
    s0_positive: Optional[bool] = None
    sigma_min_alpha: float = 0.0
    sigma_min_alpha_minus_i: float = 0.0
    sigma_min_s0: float = 0.0
    eigenvalues: Optional[List[complex]] = None
    lower_half_plane: bool = False
    spectrum_error: Optional[str] = None
    failures: List[str] = field(default_factory=list)

    @property
    def admissible(self) -> bool:
        return not self.failures

    @property
    def verdict(self) -> str:
        return "admissible" if self.admissible else "inadmissible"

    def to_dict(self) -> Dict:
        return {
            "mode": self.mode,
            "verdict": self.verdict,
            "identity_residual": self.identity_residual,
            "identity_scale": self.identity_scale,
            "s0_hermitian_residual": self.s0_hermitian_residual,
            "s0_positive": self.s0_positive,
            "sigma_min_alpha": self.sigma_min_alpha,
            "sigma_min_alpha_minus_i": self.sigma_min_alpha_minus_i,
            "sigma_min_s0": self.sigma_min_s0,
            "eigenvalues": None if self.eigenvalues is None else [[v.real, v.imag] for v in self.eigenvalues],
            "lower_half_plane": self.lower_half_plane,
            "spectrum_error": self.spectrum_error,
            "failures": list(self.failures),
        }


def validate_triple(alpha, s0, lambda0, mode: Mode = "strict", tol: Optional[Tolerance] = None) -> AdmissibilityReport:
    """
    Check the identity αS₀ − S₀α* = iΛ₀Λ₀* and the mode's hypotheses.

    Strict mode requires S₀ > 0 and 0, i ∉ σ(α); weak mode only requires
    S₀ = S₀*, det S₀ ≠ 0 and det α ≠ 0.

    Args:
        alpha: n×n matrix α
        s0: n×n matrix S₀
        lambda0: n×m matrix Λ₀
        mode: "strict" or "weak"
        tol: tolerance for every residual and spectral threshold

    Returns:
        AdmissibilityReport whose failures list names each violated condition

    Raises:
        DimensionMismatch: when the shapes are inconsistent
    """
    tol = tol or DEFAULT_TOLERANCE
    alpha = as_matrix(alpha, "alpha")
    s0 = as_matrix(s0, "s0")
    lambda0 = as_matrix(lambda0, "lambda0")
    _check_triple_shapes(alpha, s0, lambda0)
    if mode not in MODES:
        raise DimensionMismatch(f"mode must be one of {MODES}, got {mode!r}", field="mode")

    n = alpha.shape[0]
    eye = identity(n)
    report = AdmissibilityReport(mode=mode)

    residual, scale = identity_defect(alpha, s0, lambda0)
    report.identity_residual = residual
    report.identity_scale = scale
    if residual > tol.rel * scale + tol.abs:
        report.failures.append(f"identity αS₀ − S₀α* = iΛ₀Λ₀* violated (residual {residual:.3e})")

    report.s0_hermitian_residual = hermitian_residual(s0)
    if report.s0_hermitian_residual > tol.rel:
        report.failures.append(f"S₀ is not Hermitian (residual {report.s0_hermitian_residual:.3e})")

    threshold = spectral_threshold(alpha, tol)
    report.sigma_min_alpha = smallest_singular_value(alpha)
    report.sigma_min_alpha_minus_i = smallest_singular_value(alpha - 1j * eye)
    report.sigma_min_s0 = smallest_singular_value(s0)
    if report.sigma_min_alpha <= threshold:
        report.failures.append("0 ∈ σ(α)")

    if mode == "strict":
        try:
            cholesky(s0, tol)
            report.s0_positive = True
        except NotPositiveDefinite:
            report.s0_positive = False
            report.failures.append("S₀ is not positive definite")
        if report.sigma_min_alpha_minus_i <= threshold:
            report.failures.append("i ∈ σ(α)")
    elif report.sigma_min_s0 <= tol.rel * frobenius(s0) + tol.abs:
        report.failures.append("det S₀ = 0")

    try:
        report.eigenvalues = spectrum_diagnostic(alpha)
    except NoConvergence as e:
        report.spectrum_error = str(e)
        logger.warning("Spectrum diagnostic of α failed: %s", e)
    except DimensionMismatch as e:
        report.spectrum_error = str(e)

    if report.eigenvalues is not None:
        floor = -1e-8 * max(1.0, frobenius(alpha))
        report.lower_half_plane = any(v.imag < floor for v in report.eigenvalues)
        if report.lower_half_plane:
            logger.warning("σ(α) has points below the real axis; the identity residual is materially violated")
            if mode == "strict":
                report.failures.append("σ(α) leaves the closed upper half-plane")

    if report.failures:
        logger.info("Triple is inadmissible (%s mode): %s", mode, "; ".join(report.failures))
    return report


# ---------------------------------------------------------------------------
# Iteration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepDiagnostic:
    """Per-step residuals recorded by gbdt_iterate."""

    k: int
    identity_residual: float
    identity_scale: float
    s_hermitian_residual: float
    s_condition: float
    positive: Optional[bool]
    c_tilde_hermitian_residual: Optional[float] = None
    c_tilde_involution_residual: Optional[float] = None
    increment_min_eig: Optional[float] = None
    lambda_shift_residual: Optional[float] = None


SFactor = Union[CholeskyFactor, LUFactor]


@dataclass(frozen=True)
class GbdtSequence:
    """Trajectories Λ_0..Λ_K, S_0..S_K, C̃_0..C̃_{K−1} with cached factorizations."""

    triple: GbdtTriple
    potential: DiracPotential
    steps: int
    lambdas: Tuple[ComplexMatrix, ...]
    s_matrices: Tuple[ComplexMatrix, ...]
    s_factors: Tuple[SFactor, ...]
    y_blocks: Tuple[ComplexMatrix, ...]
    c_tilde: Tuple[ComplexMatrix, ...]
    diagnostics: Tuple[StepDiagnostic, ...]
    alpha_factor: LUFactor
    tol: Tolerance = DEFAULT_TOLERANCE

    @property
    def signature(self):
        return self.potential.signature

    @property
    def alpha(self) -> ComplexMatrix:
        return self.triple.alpha

    def diagnostics_table(self) -> pd.DataFrame:
        return pd.DataFrame([d.__dict__ for d in self.diagnostics])

    def failures(self, bounds: Optional[VerificationBounds] = None) -> List[str]:
        """Steps whose recorded residuals exceed the verification bounds."""
        bounds = bounds or VerificationBounds.from_tolerance(self.tol)
        found = []
        for d in self.diagnostics:
            limit = bounds.identity * (1 + d.k)
            if d.identity_residual > limit:
                found.append(f"identity residual {d.identity_residual:.3e} > {limit:.1e} at k={d.k}")
            if d.c_tilde_involution_residual is not None:
                limit = bounds.involution * (1 + d.k)
                if d.c_tilde_involution_residual > limit:
                    found.append(f"C̃ involution residual {d.c_tilde_involution_residual:.3e} > {limit:.1e} at k={d.k}")
                if d.c_tilde_hermitian_residual > limit:
                    found.append(f"C̃ Hermitian residual {d.c_tilde_hermitian_residual:.3e} > {limit:.1e} at k={d.k}")
            if d.positive is False:
                found.append(f"S_{d.k} is not positive definite")
        return found


class _AlphaOps:
    """α⁻¹(·) and α⁻¹(·)(α*)⁻¹ through one LU factorization of α."""

    def __init__(self, alpha: ComplexMatrix, tol: Tolerance):
        self.alpha = alpha
        self.factor = lu_factorize(alpha, tol)

    def left(self, m: ComplexMatrix) -> ComplexMatrix:
        return self.factor.solve(m)

    def sandwich(self, m: ComplexMatrix) -> ComplexMatrix:
        left = self.factor.solve(m)
        return self.factor.solve(left.conj().T).conj().T


def _factor_s(s: ComplexMatrix, k: int, mode: str, scale: float, tol: Tolerance) -> SFactor:
    if mode == "strict":
        try:
            return cholesky(s, tol)
        except NotPositiveDefinite as e:
            raise NumericalBreakdown(k, str(e)) from e
    sigma = smallest_singular_value(s)
    if sigma <= tol.rel * scale + tol.abs:
        raise SingularS(k, f"σ_min(S_{k}) = {sigma:.3e} against scale {scale:.3e}")
    try:
        return lu_factorize(s, tol)
    except SingularMatrix as e:
        raise SingularS(k, str(e)) from e


def gbdt_iterate(
    triple: GbdtTriple, potential: DiracPotential, steps: int, tol: Optional[Tolerance] = None
) -> GbdtSequence:
    """
    Run the GBDT recursions for k = 0..steps−1 and record per-step diagnostics.

    S_k⁻¹ is applied through a fresh factorization of every S_k (Cholesky in
    strict mode, pivoted LU in weak mode).

    Args:
        triple: validated triple
        potential: initial potential with at least `steps` coefficients
        steps: K
        tol: tolerance

    Returns:
        GbdtSequence through step K

    Raises:
        SingularS: weak mode, det S_k ≈ 0
        NumericalBreakdown: strict mode, Cholesky of S_k failed
        Overflow: the norms of S_k or Λ_k left the floating-point range
    """
    tol = tol or DEFAULT_TOLERANCE
    if steps < 0 or steps > potential.steps:
        raise DimensionMismatch(f"requested {steps} steps, potential has {potential.steps}", field="steps")
    if triple.m != potential.signature.m:
        raise DimensionMismatch(
            f"lambda0 has {triple.m} columns, potential has m = {potential.signature.m}", field="lambda0"
        )

    alpha = triple.alpha
    n = triple.n
    eye_n = identity(n)
    eye_m = identity(potential.signature.m)
    try:
        ops = _AlphaOps(alpha, tol)
    except SingularMatrix as e:
        raise NumericalError(f"α is singular: {e}") from e
    shift = eye_n - 1j * ops.left(eye_n)

    lambdas = [triple.lambda0.copy()]
    s_matrices = [triple.s0.copy()]
    factors = [_factor_s(triple.s0, 0, triple.mode, frobenius(triple.s0), tol)]
    y_blocks = [factors[0].solve_right(lambdas[0].conj().T)]
    c_tilde = []
    diagnostics = []

    for k in range(steps + 1):
        lam, s = lambdas[k], s_matrices[k]
        residual, scale = identity_defect(alpha, s, lam)
        record = dict(
            k=k,
            identity_residual=residual / max(1.0, scale),
            identity_scale=scale,
            s_hermitian_residual=hermitian_residual(s),
            s_condition=factors[k].condition,
            positive=True if triple.mode == "strict" else None,
        )
        if k == steps:
            diagnostics.append(StepDiagnostic(**record))
            break

        c = potential.c_matrices[k]
        lam_c = lam @ c
        lam_next = lam + 1j * ops.left(lam_c)
        first = ops.sandwich(s)
        second = ops.sandwich(lam_c @ lam.conj().T)
        s_next = s + first + second
        s_scale = frobenius(s) + frobenius(first) + frobenius(second)
        with np.errstate(over="ignore", invalid="ignore"):
            norms = (frobenius(s_next), frobenius(lam_next), s_scale)
        if not all(np.isfinite(norms)):
            raise Overflow(f"step {k + 1}: ‖S_{k + 1}‖_F = {norms[0]:.3e}, ‖Λ_{k + 1}‖_F = {norms[1]:.3e}")
        factor_next = _factor_s(s_next, k + 1, triple.mode, s_scale, tol)
        y_next = factor_next.solve_right(lam_next.conj().T)

        ct = c + y_blocks[k] @ lam - y_next @ lam_next

        increment = s_next - shift @ s @ shift.conj().T
        increment_min = float(np.linalg.eigvalsh((increment + increment.conj().T) / 2).min())
        shifted = alpha @ lam_next - 1j * lam_next @ c - alpha @ lam - ops.left(lam)
        shift_scale = frobenius(alpha) * (frobenius(lam_next) + frobenius(lam)) + frobenius(lam_next) + frobenius(ops.left(lam))

        record.update(
            c_tilde_hermitian_residual=frobenius(ct - ct.conj().T),
            c_tilde_involution_residual=frobenius(ct @ ct - eye_m),
            increment_min_eig=increment_min / max(1.0, frobenius(s_next)),
            lambda_shift_residual=frobenius(shifted) / max(1.0, shift_scale),
        )
        diagnostics.append(StepDiagnostic(**record))
        logger.debug(
            "k=%d identity=%.2e involution=%.2e cond(S)=%.2e",
            k, record["identity_residual"], record["c_tilde_involution_residual"], record["s_condition"],
        )

        lambdas.append(lam_next)
        s_matrices.append(s_next)
        factors.append(factor_next)
        y_blocks.append(y_next)
        c_tilde.append(ct)

    return GbdtSequence(
        triple=triple,
        potential=potential,
        steps=steps,
        lambdas=tuple(lambdas),
        s_matrices=tuple(s_matrices),
        s_factors=tuple(factors),
        y_blocks=tuple(y_blocks),
        c_tilde=tuple(c_tilde),
        diagnostics=tuple(diagnostics),
        alpha_factor=ops.factor,
        tol=tol,
    )


# ---------------------------------------------------------------------------
# Darboux matrix and transformed fundamental solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DarbouxEvaluation:
    """w_α(k, z)."""

    k: int
    z: complex
    matrix: ComplexMatrix


def _resolvent_factor(seq: GbdtSequence, z: complex) -> LUFactor:
    alpha = seq.alpha
    shifted = alpha - z * identity(seq.triple.n)
    distance = smallest_singular_value(shifted)
    if distance <= spectral_threshold(alpha, seq.tol):
        raise SpectralCollision(complex(z), distance)
    try:
        return lu_factorize(shifted, seq.tol)
    except SingularMatrix as e:
        raise SpectralCollision(complex(z), distance) from e


def _check_index(seq: GbdtSequence, k: int, upper: int) -> None:
    if k < 0 or k > upper:
        raise DimensionMismatch(f"step index {k} outside 0..{upper}", field="k")


def darboux_matrix(seq: GbdtSequence, k: int, z: complex) -> DarbouxEvaluation:
    """
    w_α(k, z) = I − iΛ_k*S_k⁻¹(α − zI)⁻¹Λ_k.

    Raises:
        SpectralCollision: when z is within threshold of σ(α)
    """
    _check_index(seq, k, seq.steps)
    resolvent = _resolvent_factor(seq, z)
    matrix = identity(seq.signature.m) - 1j * seq.y_blocks[k] @ resolvent.solve(seq.lambdas[k])
    return DarbouxEvaluation(k=k, z=complex(z), matrix=matrix)


def transfer_inverse_residual(seq: GbdtSequence, k: int, z: complex) -> float:
    """‖w_α(k, z)·w_α(k, z̄)* − I‖_F."""
    w = darboux_matrix(seq, k, z).matrix
    w_reflected = darboux_matrix(seq, k, np.conj(z)).matrix
    return frobenius(w @ w_reflected.conj().T - identity(seq.signature.m))


def _transformed_potential_raw(seq: GbdtSequence) -> DiracPotential:
    return DiracPotential(signature=seq.signature, c_matrices=seq.c_tilde)


def transformed_fundamental_direct(seq: GbdtSequence, z: complex, steps: int) -> FundamentalTrajectory:
    """w̃(k, z) from the recursion driven by C̃_k."""
    if z == 0:
        raise ZeroSpectralParameter()
    return fundamental_solution(_transformed_potential_raw(seq), z, steps)


def transformed_fundamental_darboux(seq: GbdtSequence, z: complex, steps: int) -> FundamentalTrajectory:
    """
    w̃(k, z) = w_α(k, −z) w(k, z) w_α(0, −z)⁻¹.

    The inverse is the closed form w_α(0, conj(−z))*.
    """
    if z == 0:
        raise ZeroSpectralParameter()
    _check_index(seq, steps, seq.steps)
    initial = fundamental_solution(seq.potential, z, steps)
    normalizer = darboux_matrix(seq, 0, np.conj(-z)).matrix.conj().T
    values = [darboux_matrix(seq, k, -z).matrix @ initial.values[k] @ normalizer for k in range(steps + 1)]
    return FundamentalTrajectory(z=complex(z), values=tuple(values))


def conjugation_agreement(direct: FundamentalTrajectory, darboux: FundamentalTrajectory) -> List[float]:
    """Per-k max-entry discrepancy relative to max(1, max|w̃_direct|)."""
    agreement = []
    for a, b in zip(direct.values, darboux.values):
        agreement.append(float(np.abs(a - b).max() / max(1.0, np.abs(a).max())))
    return agreement


def intertwining_residual(seq: GbdtSequence, k: int, z: complex) -> float:
    """
    Relative residual of w_α(k+1, z)(I − (i/z)C_k) = (I − (i/z)C̃_k)w_α(k, z).
    """
    if z == 0:
        raise ZeroSpectralParameter()
    _check_index(seq, k, seq.steps - 1)
    lhs = darboux_matrix(seq, k + 1, z).matrix @ step_matrix(seq.potential.c_matrices[k], z, sign=-1)
    rhs = step_matrix(seq.c_tilde[k], z, sign=-1) @ darboux_matrix(seq, k, z).matrix
    return frobenius(lhs - rhs) / max(1.0, frobenius(lhs))


def stationary_identity_residual(seq: GbdtSequence, k: int) -> float:
    """Relative residual of Y_{k+1}(α² + I) = Y_kα² − iC̃_kY_kα with Y_k = Λ_k*S_k⁻¹."""
    _check_index(seq, k, seq.steps - 1)
    alpha = seq.alpha
    alpha_sq = alpha @ alpha
    y, y_next = seq.y_blocks[k], seq.y_blocks[k + 1]
    lhs = y_next @ (alpha_sq + identity(seq.triple.n))
    rhs = y @ alpha_sq - 1j * seq.c_tilde[k] @ y @ alpha
    a = frobenius(alpha)
    scale = frobenius(y) * (a * a + a) + frobenius(y_next) * (a * a + 1)
    return frobenius(lhs - rhs) / max(1.0, scale)


def rank_profile(seq: GbdtSequence, k: int) -> Tuple[int, int]:
    """Numbers of eigenvalues of I + C̃_k near 2 and near 0."""
    _check_index(seq, k, seq.steps - 1)
    values = spectrum_diagnostic(identity(seq.signature.m) + seq.c_tilde[k])
    near_two = sum(1 for v in values if abs(v - 2) < 0.5)
    near_zero = sum(1 for v in values if abs(v) < 0.5)
    return near_two, near_zero


# ---------------------------------------------------------------------------
# Transformed potential and unitary factors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnitaryFactor:
    """W_k with C̃_k = W_k* j W_k, plus the positive blocks q̆_k, q̂_k."""

    k: int
    w_matrix: ComplexMatrix
    q_breve: ComplexMatrix
    q_hat: ComplexMatrix
    breve_residual: float
    hat_residual: float
    unitarity_residual: float
    factor_residual: float

    def to_record(self) -> Dict:
        return {
            "k": self.k,
            "breve_residual": self.breve_residual,
            "hat_residual": self.hat_residual,
            "unitarity_residual": self.unitarity_residual,
            "factor_residual": self.factor_residual,
            "q_breve_min_eig": float(np.linalg.eigvalsh(self.q_breve).min()),
            "q_hat_min_eig": float(np.linalg.eigvalsh(self.q_hat).min()),
        }


def _positive_block(a: ComplexMatrix, b: ComplexMatrix, k: int, name: str, tol: Tolerance) -> Tuple[ComplexMatrix, float]:
    """Least-squares q with a = q·b, Hermitian-symmetrized, and its relative residual."""
    solution, _, rank, _ = sla.lstsq(b.conj().T, a.conj().T)
    if rank < b.shape[0]:
        raise FactorizationFailure(k, f"{name}: right factor is rank deficient ({rank} < {b.shape[0]})")
    q = solution.conj().T
    q = (q + q.conj().T) / 2
    residual = frobenius(a - q @ b) / max(1.0, frobenius(a))
    if residual > 1e4 * tol.rel:
        raise FactorizationFailure(k, f"{name}: residual {residual:.3e} of the block relation")
    try:
        cholesky(q, tol)
    except NotPositiveDefinite as e:
        raise FactorizationFailure(k, f"{name} is not positive definite: {e}") from e
    return q, residual


def _principal_sqrt(q: ComplexMatrix) -> ComplexMatrix:
    values, vectors = np.linalg.eigh(q)
    return (vectors * np.sqrt(values)) @ vectors.conj().T


def unitary_factor(seq: GbdtSequence, k: int) -> UnitaryFactor:
    """
    Construct W_k = diag(q̆_k^½, q̂_k^½)·[[I 0]U_k w_α(k, i)*; [0 I]U_k w_α(k, −i)*].

    q̆_k solves [I 0]U_k w_α(k+1, −i)* = q̆_k [I 0]U_k w_α(k, i)* and q̂_k solves
    [0 I]U_k w_α(k+1, i)* = q̂_k [0 I]U_k w_α(k, −i)*, both by least squares.

    Raises:
        FactorizationFailure: when a block relation fails or q̆_k, q̂_k is not positive
    """
    if seq.triple.mode != "strict":
        raise GbdtError("unitary factors require a strict-mode sequence")
    if not seq.potential.has_unitaries:
        raise GbdtError("unitary factors require a potential built from unitaries")
    _check_index(seq, k, seq.steps - 1)

    signature = seq.signature
    u = seq.potential.u_matrices[k]
    upper = signature.upper_rows() @ u
    lower = signature.lower_rows() @ u

    a_breve = upper @ darboux_matrix(seq, k + 1, -1j).matrix.conj().T
    b_breve = upper @ darboux_matrix(seq, k, 1j).matrix.conj().T
    a_hat = lower @ darboux_matrix(seq, k + 1, 1j).matrix.conj().T
    b_hat = lower @ darboux_matrix(seq, k, -1j).matrix.conj().T

    q_breve, breve_residual = _positive_block(a_breve, b_breve, k, "q̆", seq.tol)
    q_hat, hat_residual = _positive_block(a_hat, b_hat, k, "q̂", seq.tol)

    w = sla.block_diag(_principal_sqrt(q_breve), _principal_sqrt(q_hat)) @ np.vstack([b_breve, b_hat])
    j = signature.j()
    return UnitaryFactor(
        k=k,
        w_matrix=w,
        q_breve=q_breve,
        q_hat=q_hat,
        breve_residual=breve_residual,
        hat_residual=hat_residual,
        unitarity_residual=unitarity_residual(w),
        factor_residual=frobenius(w.conj().T @ j @ w - seq.c_tilde[k]),
    )


def transformed_potential(seq: GbdtSequence, factors: Optional[Sequence[UnitaryFactor]] = None) -> DiracPotential:
    """
    Package {C̃_k} as a DiracPotential, attaching Ũ_k = W_k when factors for every step are given.

    Raises:
        NumericalError: when the packaged potential fails validation
    """
    if seq.triple.mode != "strict":
        raise GbdtError("the transformed potential is skew-selfadjoint Dirac only for strict-mode sequences")
    unitaries = None
    if factors is not None:
        if [f.k for f in factors] != list(range(seq.steps)):
            raise DimensionMismatch("unitary factors must cover every step 0..K−1 in order", field="factors")
        unitaries = tuple(f.w_matrix for f in factors)
    potential = DiracPotential(signature=seq.signature, c_matrices=seq.c_tilde, u_matrices=unitaries)
    bounds = VerificationBounds.from_tolerance(seq.tol)
    report = validate_potential(potential, Tolerance(rel=bounds.involution * (1 + seq.steps), abs=seq.tol.abs))
    if not report.passed:
        raise NumericalError(f"transformed potential failed validation: {report.failures[0]}")
    return potential


def chain_transform(seq: GbdtSequence, triple: GbdtTriple, steps: int) -> GbdtSequence:
    """Apply a further GBDT to the transformed system of `seq`."""
    factors = None
    if seq.potential.has_unitaries:
        factors = [unitary_factor(seq, k) for k in range(seq.steps)]
    potential = transformed_potential(seq, factors)
    return gbdt_iterate(triple, potential, steps, seq.tol)


# ---------------------------------------------------------------------------
# Spectral grids
# ---------------------------------------------------------------------------


def auto_z_grid(alpha: ComplexMatrix, per_region: int = 4) -> List[complex]:
    """
    Deterministic grid with `per_region` real, upper and lower half-plane points.

    Points keep a distance of 0.1·max(1, ‖α‖_F) from 0 and from σ(α), −σ(α)
    and their conjugates, so w_α is defined at z, z̄, −z and −z̄.
    """
    r = max(1.0, frobenius(alpha))
    margin = 0.1 * r
    try:
        eigenvalues = spectrum_diagnostic(alpha)
    except NoConvergence as e:
        logger.warning("Auto z-grid falls back to singular-value checks only: %s", e)
        eigenvalues = []
    forbidden = [0j]
    for v in eigenvalues:
        forbidden.extend([v, -v, np.conj(v), -np.conj(v)])

    n = alpha.shape[0]

    def acceptable(z: complex) -> bool:
        if any(abs(z - f) < margin for f in forbidden):
            return False
        reflections = (z, -z, np.conj(z), -np.conj(z))
        return all(smallest_singular_value(alpha - p * np.eye(n)) >= 1e-3 * margin for p in reflections)

    radii = [r * f for f in (1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)]
    real_points, upper_points, lower_points = [], [], []
    for radius in radii:
        for z in (radius, -radius):
            if len(real_points) < per_region and acceptable(complex(z)):
                real_points.append(complex(z))
        for angle in (np.pi / 4, 3 * np.pi / 4, np.pi / 3, 2 * np.pi / 3, np.pi / 2, np.pi / 6, 5 * np.pi / 6):
            z = complex(radius * np.exp(1j * angle))
            if len(upper_points) < per_region and acceptable(z):
                upper_points.append(z)
            if len(lower_points) < per_region and acceptable(np.conj(z)):
                lower_points.append(complex(np.conj(z)))
    grid = real_points + upper_points + lower_points
    if len(grid) < 3 * per_region:
        logger.warning("Auto z-grid found only %d of %d points", len(grid), 3 * per_region)
    return grid


def _grid_row(k: int, z: complex) -> Dict:
    return {"k": k, "z_re": float(np.real(z)), "z_im": float(np.imag(z))}


def darboux_grid_table(seq: GbdtSequence, z_grid: Sequence[complex], steps: Optional[int] = None) -> pd.DataFrame:
    """Per-(k, z) intertwining residual and transfer-matrix inverse residual."""
    steps = seq.steps if steps is None else steps
    _check_index(seq, steps, seq.steps)
    rows = []
    for z in z_grid:
        for k in range(steps + 1):
            row = _grid_row(k, z)
            row["intertwining_residual"] = intertwining_residual(seq, k, z) if k < steps else np.nan
            row["transfer_inverse_residual"] = transfer_inverse_residual(seq, k, z)
            rows.append(row)
    return pd.DataFrame(rows, columns=["k", "z_re", "z_im", "intertwining_residual", "transfer_inverse_residual"])


def conjugation_table(seq: GbdtSequence, z_grid: Sequence[complex], steps: Optional[int] = None) -> pd.DataFrame:
    """Per-(k, z) agreement of the directly computed and Darboux-conjugated w̃(k, z)."""
    steps = seq.steps if steps is None else steps
    rows = []
    for z in z_grid:
        direct = transformed_fundamental_direct(seq, z, steps)
        darboux = transformed_fundamental_darboux(seq, z, steps)
        for k, agreement in enumerate(conjugation_agreement(direct, darboux)):
            row = _grid_row(k, z)
            row["conjugation_agreement"] = agreement
            rows.append(row)
    return pd.DataFrame(rows, columns=["k", "z_re", "z_im", "conjugation_agreement"])
