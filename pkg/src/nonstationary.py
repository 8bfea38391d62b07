"""
Explicit solutions Ψ(t) = Y e^{itα} of the non-stationary block system
(I − 𝒮)Ψ″ + C̃Ψ′ + 𝒮Ψ = 0, where Y_k = Λ_k*S_k⁻¹ and 𝒮 shifts blocks
(block k of 𝒮Ψ is Ψ_{k+1}).
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import DimensionMismatch, NumericalError
from gbdt_engine import GbdtSequence
from linalg_core import ComplexMatrix, frobenius, identity, matrix_exponential

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolutionGenerator:
    """Blocks Y_0..Y_K of the semi-infinite column Y."""

    seq: GbdtSequence
    steps: int
    y_blocks: Tuple[ComplexMatrix, ...]
    defining_residuals: Tuple[float, ...]

    @property
    def alpha(self) -> ComplexMatrix:
        return self.seq.alpha


@dataclass(frozen=True)
class PsiSample:
    """Ψ_0(t)..Ψ_K(t)."""

    t: float
    blocks: Tuple[ComplexMatrix, ...]


def build_generator(seq: GbdtSequence, steps: Optional[int] = None) -> SolutionGenerator:
    """
    Solve Y_k·S_k = Λ_k* for k = 0..K with the cached factorizations of S_k.

    Args:
        seq: GBDT sequence computed through at least K steps
        steps: K, defaults to seq.steps

    Returns:
        SolutionGenerator with K + 1 blocks
    """
    steps = seq.steps if steps is None else steps
    if steps < 0 or steps > seq.steps:
        raise DimensionMismatch(f"generator needs {steps} steps, sequence has {seq.steps}", field="steps")
    blocks = []
    residuals = []
    for k in range(steps + 1):
        lam_adj = seq.lambdas[k].conj().T
        y = seq.s_factors[k].solve_right(lam_adj)
        blocks.append(y)
        residuals.append(frobenius(y @ seq.s_matrices[k] - lam_adj))
    return SolutionGenerator(seq=seq, steps=steps, y_blocks=tuple(blocks), defining_residuals=tuple(residuals))


def _exponential(gen: SolutionGenerator, t: float) -> ComplexMatrix:
    if not np.isfinite(t):
        raise NumericalError(f"time must be finite, got {t}")
    if t == 0:
        return identity(gen.alpha.shape[0])
    return matrix_exponential(1j * t * gen.alpha)


def sample_psi(gen: SolutionGenerator, t: float) -> PsiSample:
    """Ψ_k(t) = Y_k e^{itα}, sharing one exponential across all blocks."""
    e = _exponential(gen, t)
    return PsiSample(t=float(t), blocks=tuple(y @ e for y in gen.y_blocks))


def _check_blocks(gen: SolutionGenerator, steps: Optional[int]) -> int:
    steps = gen.steps if steps is None else steps
    if steps < 0 or steps > gen.steps:
        raise DimensionMismatch(f"{steps} block equations need {steps + 1} blocks, generator has {gen.steps + 1}", field="steps")
    return steps


def _block_scale(gen: SolutionGenerator, k: int) -> float:
    a = frobenius(gen.alpha)
    return max(1.0, frobenius(gen.y_blocks[k]) * a * a + frobenius(gen.y_blocks[k + 1]) * (a * a + 1))


def _block_defect(gen: SolutionGenerator, k: int) -> ComplexMatrix:
    """−Y_kα² + Y_{k+1}α² + iC̃_kY_kα + Y_{k+1}."""
    alpha = gen.alpha
    alpha_sq = alpha @ alpha
    y, y_next = gen.y_blocks[k], gen.y_blocks[k + 1]
    return -y @ alpha_sq + y_next @ alpha_sq + 1j * gen.seq.c_tilde[k] @ y @ alpha + y_next


def nonstationary_residual(gen: SolutionGenerator, t: float, steps: Optional[int] = None) -> List[float]:
    """
    Scaled residuals of the first K block equations at time t.

    Block k reads Ψ″_k − Ψ″_{k+1} + C̃_kΨ′_k + Ψ_{k+1} = 0 with
    Ψ′_k = Y_k(iα)e^{itα} and Ψ″_k = −Y_kα²e^{itα}.
    """
    steps = _check_blocks(gen, steps)
    e = _exponential(gen, t)
    alpha = gen.alpha
    alpha_sq = alpha @ alpha
    residuals = []
    for k in range(steps):
        y, y_next = gen.y_blocks[k], gen.y_blocks[k + 1]
        second = -y @ alpha_sq @ e
        second_next = -y_next @ alpha_sq @ e
        first = 1j * y @ alpha @ e
        defect = second - second_next + gen.seq.c_tilde[k] @ first + y_next @ e
        residuals.append(frobenius(defect) / _block_scale(gen, k))
    return residuals


def time_independent_residual(gen: SolutionGenerator, steps: Optional[int] = None) -> List[float]:
    """Scaled residuals of −Y_kα² + Y_{k+1}α² + iC̃_kY_kα + Y_{k+1} = 0."""
    steps = _check_blocks(gen, steps)
    return [frobenius(_block_defect(gen, k)) / _block_scale(gen, k) for k in range(steps)]


def finite_difference_check(gen: SolutionGenerator, t: float, h: float, steps: Optional[int] = None) -> List[float]:
    """
    Compare central differences of Ψ at step h with the analytic derivatives.

    Args:
        gen: solution generator
        t: time
        h: difference step, positive
        steps: blocks 0..K are compared

    Returns:
        Per-block max(‖ΔΨ′‖_F, ‖ΔΨ″‖_F), of order h²·‖α‖³·‖Ψ‖
    """
    if not h > 0:
        raise ValueError(f"difference step must be positive, got {h}")
    steps = _check_blocks(gen, steps)
    alpha = gen.alpha
    e = _exponential(gen, t)
    e_plus = _exponential(gen, t + h)
    e_minus = _exponential(gen, t - h)
    discrepancies = []
    for k in range(steps + 1):
        y = gen.y_blocks[k]
        psi, psi_plus, psi_minus = y @ e, y @ e_plus, y @ e_minus
        first = (psi_plus - psi_minus) / (2 * h)
        second = (psi_plus - 2 * psi + psi_minus) / (h * h)
        exact_first = 1j * y @ alpha @ e
        exact_second = -y @ alpha @ alpha @ e
        discrepancies.append(max(frobenius(first - exact_first), frobenius(second - exact_second)))
    return discrepancies


def finite_difference_convergence(
    gen: SolutionGenerator, t: float, h: float, steps: Optional[int] = None
) -> pd.DataFrame:
    """
    Run finite_difference_check at h and h/2 and bound the discrepancies.

    Args:
        gen: solution generator
        t: time
        h: coarse difference step, positive
        steps: blocks 0..K are compared

    Returns:
        Rows (k, coarse, fine, ratio, bound). `bound` is the Taylor remainder
        h²·‖α‖₂³·max(1, ‖α‖₂)·‖Y_k‖_F·e^{(|t|+h)‖α‖₂}/6 plus a roundoff
        allowance. `ratio` = coarse/fine, NaN where the fine discrepancy is
        within roundoff of zero and the ratio carries no information.
    """
    coarse = finite_difference_check(gen, t, h, steps)
    fine = finite_difference_check(gen, t, h / 2, steps)
    a = float(np.linalg.norm(gen.alpha, 2))
    growth = np.exp((abs(t) + h) * a)
    eps = np.finfo(float).eps
    rows = []
    for k, (c, f) in enumerate(zip(coarse, fine)):
        psi_scale = frobenius(gen.y_blocks[k]) * growth
        taylor = h * h * a**3 * max(1.0, a) * psi_scale / 6
        roundoff = 16 * eps * psi_scale / (h / 2) ** 2
        ratio = c / f if f > 10 * roundoff else np.nan
        rows.append({"k": k, "coarse": c, "fine": f, "ratio": ratio, "bound": taylor + 10 * roundoff})
    return pd.DataFrame(rows, columns=["k", "coarse", "fine", "ratio", "bound"])


def default_t_grid(alpha: ComplexMatrix) -> List[float]:
    """{0, ±0.5, ±1}·min(1, 1/‖α‖_F), so that ‖itα‖ ≤ 1."""
    unit = min(1.0, 1.0 / frobenius(alpha))
    return [f * unit for f in (-1.0, -0.5, 0.0, 0.5, 1.0)]


def nonstationary_table(gen: SolutionGenerator, t_grid: Sequence[float], steps: Optional[int] = None) -> pd.DataFrame:
    """Rows (k, t, residual, scale) over the time grid."""
    steps = _check_blocks(gen, steps)
    scales = [_block_scale(gen, k) for k in range(steps)]
    rows = []
    for t in t_grid:
        for k, r in enumerate(nonstationary_residual(gen, t, steps)):
            rows.append({"k": k, "t": float(t), "residual": r, "scale": scales[k]})
    return pd.DataFrame(rows, columns=["k", "t", "residual", "scale"])


def residual_spread(table: pd.DataFrame, floor: float = 1e-13) -> float:
    """
    Largest per-block ratio (max_t r + floor) / (min_t r + floor).

    Values near 1 mean the residuals do not depend on t.
    """
    if table.empty:
        return 1.0
    grouped = table.groupby("k")["residual"]
    ratios = (grouped.max() + floor) / (grouped.min() + floor)
    return float(ratios.max())
