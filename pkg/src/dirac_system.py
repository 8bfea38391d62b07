"""
Discrete skew-selfadjoint Dirac systems.
Signature matrices, potentials C_k = U_k* j U_k and the fundamental
solution recursion w(k+1, z) = (I + (i/z) C_k) w(k, z).
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import DimensionMismatch, NotUnitary, ZeroSpectralParameter
from linalg_core import (
    DEFAULT_TOLERANCE,
    ComplexMatrix,
    Tolerance,
    as_matrix,
    frobenius,
    identity,
    random_unitary,
    unitarity_residual,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SignatureSpec:
    """Split m = m1 + m2 fixing j = diag(I_m1, −I_m2)."""

    m1: int
    m2: int

    def __post_init__(self):
        if self.m1 < 1 or self.m2 < 1:
            raise DimensionMismatch(f"m1 and m2 must be positive, got m1={self.m1}, m2={self.m2}", field="signature")

    @property
    def m(self) -> int:
        return self.m1 + self.m2

    def j(self) -> ComplexMatrix:
        return np.diag(np.concatenate([np.ones(self.m1), -np.ones(self.m2)])).astype(np.complex128)

    def upper_rows(self) -> ComplexMatrix:
        """[I_m1 0]."""
        return identity(self.m)[: self.m1, :]

    def lower_rows(self) -> ComplexMatrix:
        """[0 I_m2]."""
        return identity(self.m)[self.m1 :, :]


@dataclass(frozen=True)
class DiracPotential:
    """Coefficients C_0..C_{K-1}, optionally with their generating unitaries."""

    signature: SignatureSpec
    c_matrices: Tuple[ComplexMatrix, ...]
    u_matrices: Optional[Tuple[ComplexMatrix, ...]] = None

    def __post_init__(self):
        m = self.signature.m
        for k, c in enumerate(self.c_matrices):
            if c.shape != (m, m):
                raise DimensionMismatch(f"C_{k} has shape {c.shape}, expected {(m, m)}", field="potential")
        if self.u_matrices is not None and len(self.u_matrices) != len(self.c_matrices):
            raise DimensionMismatch(
                f"{len(self.u_matrices)} unitaries for {len(self.c_matrices)} coefficients", field="potential"
            )

    @property
    def steps(self) -> int:
        return len(self.c_matrices)

    @property
    def has_unitaries(self) -> bool:
        return self.u_matrices is not None


@dataclass
class PotentialReport:
    """Per-step residuals of C_k = C_k* and C_k² = I."""

    hermitian_residuals: List[float] = field(default_factory=list)
    involution_residuals: List[float] = field(default_factory=list)
    factor_residuals: Optional[List[float]] = None
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def table(self) -> pd.DataFrame:
        data = {
            "k": list(range(len(self.hermitian_residuals))),
            "hermitian_residual": self.hermitian_residuals,
            "involution_residual": self.involution_residuals,
        }
        if self.factor_residuals is not None:
            data["factor_residual"] = self.factor_residuals
        return pd.DataFrame(data)


@dataclass(frozen=True)
class FundamentalTrajectory:
    """w(0, z), ..., w(K, z)."""

    z: complex
    values: Tuple[ComplexMatrix, ...]

    @property
    def steps(self) -> int:
        return len(self.values) - 1


def step_matrix(c: ComplexMatrix, z: complex, sign: int = 1) -> ComplexMatrix:
    """I + sign·(i/z)·C."""
    if z == 0:
        raise ZeroSpectralParameter()
    return identity(c.shape[0]) + sign * (1j / z) * c


def constant_j_potential(signature: SignatureSpec, steps: int) -> DiracPotential:
    """The trivial system C_k ≡ j, generated by U_k ≡ I."""
    j = signature.j()
    eye = identity(signature.m)
    return DiracPotential(
        signature=signature,
        c_matrices=tuple(j.copy() for _ in range(steps)),
        u_matrices=tuple(eye.copy() for _ in range(steps)),
    )


def potential_from_unitaries(
    unitaries: Sequence[ComplexMatrix], signature: SignatureSpec, tol: Optional[Tolerance] = None
) -> DiracPotential:
    """
    Build C_k = U_k* j U_k.

    Args:
        unitaries: m×m unitary matrices U_0..U_{K-1}
        signature: the split m = m1 + m2
        tol: unitarity tolerance

    Returns:
        DiracPotential carrying both C_k and U_k

    Raises:
        NotUnitary: when some ‖U_k U_k* − I‖_F exceeds the tolerance
    """
    tol = tol or DEFAULT_TOLERANCE
    j = signature.j()
    c_matrices = []
    u_matrices = []
    for k, u in enumerate(unitaries):
        u = as_matrix(u, name=f"U_{k}")
        if u.shape != (signature.m, signature.m):
            raise DimensionMismatch(f"U_{k} has shape {u.shape}, expected {(signature.m, signature.m)}", field="potential")
        residual = unitarity_residual(u)
        if residual > tol.scaled(signature.m):
            raise NotUnitary(k, residual)
        u_matrices.append(u)
        c_matrices.append(u.conj().T @ j @ u)
    return DiracPotential(signature=signature, c_matrices=tuple(c_matrices), u_matrices=tuple(u_matrices))


def random_unitary_potential(signature: SignatureSpec, steps: int, seed: int) -> DiracPotential:
    """Potential generated by U_k = random_unitary(m, seed + k)."""
    unitaries = [random_unitary(signature.m, seed + k) for k in range(steps)]
    return potential_from_unitaries(unitaries, signature)


def potential_from_matrices(c_matrices: Sequence[ComplexMatrix], signature: SignatureSpec) -> DiracPotential:
    """Wrap explicit coefficients; validate_potential checks C_k = C_k* and C_k² = I."""
    return DiracPotential(
        signature=signature,
        c_matrices=tuple(as_matrix(c, name=f"C_{k}") for k, c in enumerate(c_matrices)),
    )


def validate_potential(potential: DiracPotential, tol: Optional[Tolerance] = None) -> PotentialReport:
    """Residuals of C_k = C_k*, C_k² = I and (when present) C_k = U_k* j U_k."""
    tol = tol or DEFAULT_TOLERANCE
    m = potential.signature.m
    eye = identity(m)
    j = potential.signature.j()
    report = PotentialReport()
    if potential.has_unitaries:
        report.factor_residuals = []

    for k, c in enumerate(potential.c_matrices):
        bound = tol.scaled(frobenius(c))
        herm = frobenius(c - c.conj().T)
        invol = frobenius(c @ c - eye)
        report.hermitian_residuals.append(herm)
        report.involution_residuals.append(invol)
        if herm > bound:
            report.failures.append(f"C_{k} is not Hermitian (residual {herm:.3e})")
        if invol > bound:
            report.failures.append(f"C_{k}² ≠ I (residual {invol:.3e})")
        if potential.has_unitaries:
            u = potential.u_matrices[k]
            fact = frobenius(c - u.conj().T @ j @ u)
            report.factor_residuals.append(fact)
            if fact > bound:
                report.failures.append(f"C_{k} ≠ U_{k}* j U_{k} (residual {fact:.3e})")

    if report.failures:
        logger.warning("Potential failed %d checks; first: %s", len(report.failures), report.failures[0])
    return report


def fundamental_solution(potential: DiracPotential, z: complex, steps: int) -> FundamentalTrajectory:
    """
    Run w(k+1, z) = (I + (i/z) C_k) w(k, z) from w(0, z) = I.

    z = ±i is allowed; only z = 0 is rejected.
    """
    if z == 0:
        raise ZeroSpectralParameter()
    if steps < 0 or steps > potential.steps:
        raise DimensionMismatch(f"requested {steps} steps, potential has {potential.steps}", field="steps")
    values = [identity(potential.signature.m)]
    for k in range(steps):
        values.append(step_matrix(potential.c_matrices[k], z) @ values[-1])
    return FundamentalTrajectory(z=complex(z), values=tuple(values))
