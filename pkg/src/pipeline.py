"""
Stage orchestration: validate → iterate → darboux / fundamental / factorize /
nonstationary, with per-stage status, verdict and exit code.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from config import VERSION
from dirac_system import DiracPotential, validate_potential
from errors import GbdtError, NumericalError, ParseError
from gbdt_engine import (
    AdmissibilityReport,
    GbdtSequence,
    VerificationBounds,
    auto_z_grid,
    conjugation_table,
    darboux_grid_table,
    gbdt_iterate,
    rank_profile,
    stationary_identity_residual,
    transformed_potential,
    unitary_factor,
    validate_triple,
)
from nonstationary import (
    SolutionGenerator,
    build_generator,
    default_t_grid,
    finite_difference_convergence,
    nonstationary_residual,
    nonstationary_table,
    residual_spread,
    time_independent_residual,
)
from problem_parser import ProblemSpec, encode_complex

logger = logging.getLogger(__name__)

STAGES = ("validate", "iterate", "darboux", "fundamental", "factorize", "nonstationary")
DEPENDENCIES = {
    "validate": (),
    "iterate": ("validate",),
    "darboux": ("iterate",),
    "fundamental": ("iterate",),
    "factorize": ("iterate",),
    "nonstationary": ("iterate",),
}

EXIT_PASS = 0
EXIT_VERDICT_FAIL = 1
EXIT_NUMERICAL = 2
EXIT_SPEC = 3


def resolve_commands(commands: Iterable[str]) -> List[str]:
    """Close the requested stages under their dependencies, in execution order."""
    requested = set()
    pending = list(commands)
    while pending:
        name = pending.pop()
        if name not in DEPENDENCIES:
            raise ParseError(f"unknown command {name!r}; expected one of {STAGES}", field="commands")
        if name not in requested:
            requested.add(name)
            pending.extend(DEPENDENCIES[name])
    return [name for name in STAGES if name in requested]


@dataclass
class StageResult:
    """Outcome of one stage: pass, fail, error or skipped."""

    status: str
    message: str = ""
    failures: List[str] = field(default_factory=list)
    elapsed: float = 0.0
    exit_code: int = EXIT_PASS

    def to_dict(self, include_timings: bool = True) -> Dict:
        record = {"status": self.status, "message": self.message, "failures": list(self.failures)}
        if include_timings:
            record["elapsed_seconds"] = self.elapsed
        return record


@dataclass
class RunReport:
    """Everything a run produced, ready for emission."""

    problem: Dict
    commands: List[str]
    stages: Dict[str, StageResult]
    tables: Dict[str, pd.DataFrame]
    summary: Dict[str, Any]
    admissibility: Optional[Dict] = None
    z_grid: List[complex] = field(default_factory=list)
    t_grid: List[float] = field(default_factory=list)
    exit_code: int = EXIT_PASS
    failing_stage: Optional[str] = None
    error: Optional[str] = None
    total_elapsed: float = 0.0
    version: str = VERSION

    @property
    def verdict(self) -> str:
        return "pass" if self.exit_code == EXIT_PASS else "fail"

    def to_dict(self, include_timings: bool = True) -> Dict:
        record = {
            "version": self.version,
            "problem": self.problem,
            "commands": list(self.commands),
            "verdict": self.verdict,
            "exit_code": self.exit_code,
            "failing_stage": self.failing_stage,
            "error": self.error,
            "stages": {name: r.to_dict(include_timings) for name, r in self.stages.items()},
            "admissibility": self.admissibility,
            "z_grid": [encode_complex(z) for z in self.z_grid],
            "t_grid": [float(t) for t in self.t_grid],
            "summary": self.summary,
            "tables": {name: table.to_dict(orient="records") for name, table in self.tables.items()},
        }
        if include_timings:
            record["timings"] = {
                "total_seconds": self.total_elapsed,
                **{name: r.elapsed for name, r in self.stages.items()},
            }
        return record


def _column_max(table: pd.DataFrame, column: str) -> Optional[float]:
    if table.empty or column not in table:
        return None
    values = table[column].dropna()
    return None if values.empty else float(values.max())


def _column_min(table: pd.DataFrame, column: str) -> Optional[float]:
    if table.empty or column not in table:
        return None
    values = table[column].dropna()
    return None if values.empty else float(values.min())


class GbdtPipeline:
    """Runs the requested stages of one problem and tracks their status."""

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self.tol = spec.run.tolerance
        self.bounds = VerificationBounds.from_tolerance(self.tol)
        self.spread_limit = 10.0
        self.finite_difference_step = 1e-3
        self.convergence_window = (3.0, 5.0)
        self.workflow_status: Dict[str, StageResult] = {}
        self.skip_reasons: Dict[str, str] = {}
        self.potential: Optional[DiracPotential] = None
        self.admissibility: Optional[AdmissibilityReport] = None
        self.sequence: Optional[GbdtSequence] = None
        self.generator: Optional[SolutionGenerator] = None
        self.tables: Dict[str, pd.DataFrame] = {}
        self.summary: Dict[str, Any] = {}
        self.z_grid: List[complex] = []
        self.t_grid: List[float] = []

    def run(self, commands: Iterable[str] = STAGES) -> RunReport:
        """
        Execute the stages in dependency order.

        Args:
            commands: requested stage names; dependencies are added automatically

        Returns:
            RunReport; stage errors are recorded rather than raised
        """
        order = resolve_commands(commands)
        handlers: Dict[str, Callable[[], List[str]]] = {
            "validate": self._validate,
            "iterate": self._iterate,
            "darboux": self._darboux,
            "fundamental": self._fundamental,
            "factorize": self._factorize,
            "nonstationary": self._nonstationary,
        }
        started = time.perf_counter()
        for name in order:
            blocked = [d for d in DEPENDENCIES[name] if self.workflow_status[d].status != "pass"]
            if blocked:
                self.workflow_status[name] = StageResult(status="skipped", message=f"requires {', '.join(blocked)}")
                continue
            self.workflow_status[name] = self._run_stage(name, handlers[name])

        return self._assemble(order, time.perf_counter() - started)

    def _run_stage(self, name: str, handler: Callable[[], List[str]]) -> StageResult:
        logger.info("Stage %s started", name)
        started = time.perf_counter()
        try:
            outcome = handler()
        except NumericalError as e:
            logger.error("Stage %s failed numerically: %s", name, e)
            return StageResult(status="error", message=str(e), elapsed=time.perf_counter() - started, exit_code=EXIT_NUMERICAL)
        except GbdtError as e:
            logger.error("Stage %s rejected the problem: %s", name, e)
            return StageResult(status="error", message=str(e), elapsed=time.perf_counter() - started, exit_code=EXIT_SPEC)
        elapsed = time.perf_counter() - started
        if outcome is None:
            return StageResult(status="skipped", message=self.skip_reasons.get(name, ""), elapsed=elapsed)
        status = "fail" if outcome else "pass"
        logger.info("Stage %s finished: %s (%.3f s)", name, status, elapsed)
        return StageResult(
            status=status,
            message=outcome[0] if outcome else "",
            failures=outcome,
            elapsed=elapsed,
            exit_code=EXIT_VERDICT_FAIL if outcome else EXIT_PASS,
        )

    # -----------------------------------------------------------------------
    # Stages; each returns the list of failed checks (None when skipped)
    # -----------------------------------------------------------------------

    def _validate(self) -> List[str]:
        spec = self.spec
        self.potential = spec.build_potential()
        failures = []

        potential_report = validate_potential(self.potential, self.tol)
        self.tables["potential"] = potential_report.table()
        failures.extend(potential_report.failures)

        triple = spec.triple
        self.admissibility = validate_triple(triple.alpha, triple.s0, triple.lambda0, triple.mode, self.tol)
        failures.extend(self.admissibility.failures)
        return failures

    def _iterate(self) -> List[str]:
        seq = gbdt_iterate(self.spec.triple, self.potential, self.spec.run.steps, self.tol)
        self.sequence = seq
        failures = seq.failures(self.bounds)

        table = seq.diagnostics_table()
        stationary = [stationary_identity_residual(seq, k) for k in range(seq.steps)] + [np.nan]
        table["stationary_residual"] = stationary
        for k, value in enumerate(stationary[:-1]):
            if value > self.bounds.stationary * (1 + k):
                failures.append(f"stationary identity residual {value:.3e} at k={k}")

        if seq.triple.mode == "strict":
            expected = (seq.signature.m1, seq.signature.m2)
            profiles = [rank_profile(seq, k) for k in range(seq.steps)]
            table["rank_near_two"] = [p[0] for p in profiles] + [np.nan]
            table["rank_near_zero"] = [p[1] for p in profiles] + [np.nan]
            for k, profile in enumerate(profiles):
                if profile != expected:
                    failures.append(f"rank profile of I + C̃_{k} is {profile}, expected {expected}")

        increment = _column_min(table, "increment_min_eig")
        if increment is not None and increment < -self.bounds.identity * (1 + seq.steps):
            logger.warning("S_k increments are not positive semidefinite (min eigenvalue %.3e)", increment)

        self.tables["steps"] = table
        self.summary.update(
            max_identity_residual=_column_max(table, "identity_residual"),
            max_involution_residual=_column_max(table, "c_tilde_involution_residual"),
            max_hermitian_residual=_column_max(table, "c_tilde_hermitian_residual"),
            max_stationary_residual=_column_max(table, "stationary_residual"),
            max_lambda_shift_residual=_column_max(table, "lambda_shift_residual"),
            min_increment_eig=increment,
            max_s_condition=_column_max(table, "s_condition"),
        )
        return failures

    def _resolve_z_grid(self) -> List[complex]:
        if not self.z_grid:
            grid = self.spec.run.z_grid
            self.z_grid = list(grid) if grid is not None else auto_z_grid(self.spec.triple.alpha)
            logger.info("Spectral grid: %d points", len(self.z_grid))
        return self.z_grid

    def _darboux(self) -> List[str]:
        table = darboux_grid_table(self.sequence, self._resolve_z_grid())
        self.tables["darboux"] = table
        failures = []
        for row in table.itertuples(index=False):
            if not np.isnan(row.intertwining_residual) and row.intertwining_residual > self.bounds.intertwining:
                failures.append(f"intertwining residual {row.intertwining_residual:.3e} at k={row.k}, z={row.z_re}{row.z_im:+}i")
            if row.transfer_inverse_residual > self.bounds.transfer_inverse:
                failures.append(f"transfer inverse residual {row.transfer_inverse_residual:.3e} at k={row.k}, z={row.z_re}{row.z_im:+}i")
        self.summary.update(
            max_intertwining_residual=_column_max(table, "intertwining_residual"),
            max_transfer_inverse_residual=_column_max(table, "transfer_inverse_residual"),
        )
        return failures

    def _fundamental(self) -> List[str]:
        table = conjugation_table(self.sequence, self._resolve_z_grid())
        self.tables["conjugation"] = table
        failures = [
            f"conjugation agreement {row.conjugation_agreement:.3e} at k={row.k}, z={row.z_re}{row.z_im:+}i"
            for row in table.itertuples(index=False)
            if row.conjugation_agreement > self.bounds.conjugation * (1 + row.k)
        ]
        self.summary["max_conjugation_agreement"] = _column_max(table, "conjugation_agreement")
        return failures

    def _factorize(self) -> Optional[List[str]]:
        seq = self.sequence
        if seq.triple.mode != "strict" or not seq.potential.has_unitaries:
            self.skip_reasons["factorize"] = "unitary factors need a strict-mode run with generating unitaries"
            return None
        factors = [unitary_factor(seq, k) for k in range(seq.steps)]
        table = pd.DataFrame([f.to_record() for f in factors])
        self.tables["factorization"] = table
        failures = []
        for f in factors:
            if f.unitarity_residual > self.bounds.factorization:
                failures.append(f"W_{f.k} unitarity residual {f.unitarity_residual:.3e}")
            if f.factor_residual > self.bounds.factorization:
                failures.append(f"W_{f.k}* j W_{f.k} differs from C̃_{f.k} by {f.factor_residual:.3e}")
        transformed_potential(seq, factors)
        self.summary.update(
            max_unitarity_residual=_column_max(table, "unitarity_residual"),
            max_factor_residual=_column_max(table, "factor_residual"),
        )
        return failures

    def _nonstationary(self) -> List[str]:
        gen = build_generator(self.sequence)
        self.generator = gen
        grid = self.spec.run.t_grid
        self.t_grid = list(grid) if grid is not None else default_t_grid(self.spec.triple.alpha)
        table = nonstationary_table(gen, self.t_grid)
        self.tables["nonstationary"] = table

        failures = [
            f"non-stationary residual {row.residual:.3e} at k={row.k}, t={row.t}"
            for row in table.itertuples(index=False)
            if row.residual > self.bounds.nonstationary
        ]
        spread = residual_spread(table, floor=self.tol.abs)
        if spread > self.spread_limit:
            failures.append(f"non-stationary residuals vary with t by a factor {spread:.2f}")

        static = time_independent_residual(gen)
        at_zero = nonstationary_residual(gen, 0.0)
        equivalence = max((abs(a - b) for a, b in zip(static, at_zero)), default=0.0)
        if equivalence > self.tol.rel:
            failures.append(f"time-independent and t = 0 residuals differ by {equivalence:.3e}")

        convergence = finite_difference_convergence(gen, 0.0, self.finite_difference_step)
        low, high = self.convergence_window
        for row in convergence.itertuples(index=False):
            if row.coarse > row.bound:
                failures.append(f"finite-difference discrepancy {row.coarse:.3e} at k={row.k} exceeds {row.bound:.3e}")
            if not np.isnan(row.ratio) and not low <= row.ratio <= high:
                failures.append(f"finite differences at k={row.k} converge with ratio {row.ratio:.2f}, not second order")
        self.summary.update(
            max_nonstationary_residual=_column_max(table, "residual"),
            nonstationary_spread=spread,
            nonstationary_equivalence=equivalence,
            max_defining_residual=max(gen.defining_residuals),
            finite_difference_discrepancy=_column_max(convergence, "coarse"),
            finite_difference_min_ratio=_column_min(convergence, "ratio"),
            finite_difference_max_ratio=_column_max(convergence, "ratio"),
        )
        return failures

    # -----------------------------------------------------------------------

    def _grid_table(self) -> Optional[pd.DataFrame]:
        darboux = self.tables.pop("darboux", None)
        conjugation = self.tables.pop("conjugation", None)
        if darboux is not None and conjugation is not None:
            return darboux.merge(conjugation, on=["k", "z_re", "z_im"], how="outer")
        return darboux if darboux is not None else conjugation

    def _assemble(self, order: List[str], elapsed: float) -> RunReport:
        grid_table = self._grid_table()
        if grid_table is not None:
            self.tables["intertwining"] = grid_table

        exit_code = EXIT_PASS
        failing_stage = None
        error = None
        errors = [name for name in order if self.workflow_status[name].status == "error"]
        fails = [name for name in order if self.workflow_status[name].status == "fail"]
        if errors:
            failing_stage = errors[0]
            exit_code = self.workflow_status[failing_stage].exit_code
            error = self.workflow_status[failing_stage].message
        elif fails:
            failing_stage = fails[0]
            exit_code = EXIT_VERDICT_FAIL

        return RunReport(
            problem=self.spec.to_dict(),
            commands=order,
            stages=dict(self.workflow_status),
            tables=dict(self.tables),
            summary=dict(self.summary),
            admissibility=None if self.admissibility is None else self.admissibility.to_dict(),
            z_grid=list(self.z_grid),
            t_grid=list(self.t_grid),
            exit_code=exit_code,
            failing_stage=failing_stage,
            error=error,
            total_elapsed=elapsed,
        )


def run_pipeline(spec: ProblemSpec, commands: Iterable[str] = STAGES) -> RunReport:
    """Run the requested stages of `spec`; see GbdtPipeline."""
    return GbdtPipeline(spec).run(commands)
