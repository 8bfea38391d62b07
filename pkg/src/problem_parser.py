"""
Problem file parsing.

A problem file is one JSON document:

    {
      "signature": {"m1": 1, "m2": 1},
      "potential": {"type": "constant-j"},
      "triple": {"alpha": [[[0, 2]]], "s0": [[1]], "lambda0": [[2, 0]], "mode": "strict"},
      "run": {"steps": 3, "z_grid": "auto", "t_grid": "auto",
              "tolerance": {"rel": 1e-10, "abs": 1e-13}}
    }

Matrices are nested row-major arrays; each entry is a real number or a
two-element [re, im] array. Unknown fields are rejected.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from config import default_tolerance
from dirac_system import (
    DiracPotential,
    SignatureSpec,
    constant_j_potential,
    potential_from_matrices,
    potential_from_unitaries,
    random_unitary_potential,
)
from errors import DimensionMismatch, ParseError, UnknownGenerator
from gbdt_engine import MODES, GbdtTriple
from linalg_core import ComplexMatrix, Tolerance

logger = logging.getLogger(__name__)

GENERATORS = ("constant-j", "unitary-list", "random-unitary", "explicit")


def encode_complex(value: complex) -> List[float]:
    value = complex(value)
    return [float(value.real), float(value.imag)]


def encode_matrix(matrix: ComplexMatrix) -> List[List[List[float]]]:
    """Row-major nested [re, im] encoding."""
    return [[encode_complex(v) for v in row] for row in np.asarray(matrix)]


@dataclass(frozen=True)
class PotentialRecord:
    """Generator description of the initial potential."""

    kind: str
    seed: Optional[int] = None
    matrices: Optional[tuple] = None

    def to_dict(self) -> Dict:
        record: Dict[str, Any] = {"type": self.kind}
        if self.kind == "random-unitary":
            record["seed"] = self.seed
        elif self.kind == "unitary-list":
            record["unitaries"] = [encode_matrix(u) for u in self.matrices]
        elif self.kind == "explicit":
            record["c"] = [encode_matrix(c) for c in self.matrices]
        return record


@dataclass(frozen=True)
class RunSettings:
    """Step count, spectral and time grids (None means auto) and tolerances."""

    steps: int
    z_grid: Optional[tuple] = None
    t_grid: Optional[tuple] = None
    tolerance: Tolerance = field(default_factory=Tolerance)

    def to_dict(self) -> Dict:
        return {
            "steps": self.steps,
            "z_grid": "auto" if self.z_grid is None else [encode_complex(z) for z in self.z_grid],
            "t_grid": "auto" if self.t_grid is None else [float(t) for t in self.t_grid],
            "tolerance": {
                "rel": self.tolerance.rel,
                "abs": self.tolerance.abs,
                "cond_warn": self.tolerance.cond_warn,
            },
        }


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A fully validated problem: signature, potential generator, triple and run settings."""

    signature: SignatureSpec
    potential: PotentialRecord
    triple: GbdtTriple
    run: RunSettings

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProblemSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self) -> Dict:
        """Echo in problem-file form; parsing it reproduces an equal spec."""
        return {
            "signature": {"m1": self.signature.m1, "m2": self.signature.m2},
            "potential": self.potential.to_dict(),
            "triple": {
                "alpha": encode_matrix(self.triple.alpha),
                "s0": encode_matrix(self.triple.s0),
                "lambda0": encode_matrix(self.triple.lambda0),
                "mode": self.triple.mode,
            },
            "run": self.run.to_dict(),
        }

    def with_overrides(
        self,
        steps: Optional[int] = None,
        seed: Optional[int] = None,
        tolerance_rel: Optional[float] = None,
        tolerance_abs: Optional[float] = None,
    ) -> "ProblemSpec":
        """Apply command-line overrides, re-checking the step count against the potential."""
        spec = self
        if steps is not None:
            if steps < 1:
                raise ParseError(f"steps must be at least 1, got {steps}", field="steps")
            spec = replace(spec, run=replace(spec.run, steps=steps))
        if seed is not None:
            if spec.potential.kind != "random-unitary":
                logger.warning("--seed ignored: potential type is %s", spec.potential.kind)
            else:
                spec = replace(spec, potential=replace(spec.potential, seed=seed))
        if tolerance_rel is not None or tolerance_abs is not None:
            tol = spec.run.tolerance
            try:
                tol = Tolerance(
                    rel=tol.rel if tolerance_rel is None else tolerance_rel,
                    abs=tol.abs if tolerance_abs is None else tolerance_abs,
                    cond_warn=tol.cond_warn,
                )
            except ValueError as e:
                raise ParseError(str(e), field="tolerance") from e
            spec = replace(spec, run=replace(spec.run, tolerance=tol))
        _check_potential_length(spec.potential, spec.run.steps)
        return spec

    def build_potential(self) -> DiracPotential:
        """
        Materialize the initial potential for run.steps steps.

        Raises:
            NotUnitary: when a listed U_k fails the unitarity tolerance
        """
        record = self.potential
        steps = self.run.steps
        if record.kind == "constant-j":
            return constant_j_potential(self.signature, steps)
        if record.kind == "random-unitary":
            return random_unitary_potential(self.signature, steps, record.seed)
        if record.kind == "unitary-list":
            return potential_from_unitaries(record.matrices[:steps], self.signature, self.run.tolerance)
        return potential_from_matrices(record.matrices[:steps], self.signature)


def _check_potential_length(record: PotentialRecord, steps: int) -> None:
    if record.matrices is not None and len(record.matrices) < steps:
        raise DimensionMismatch(
            f"potential lists {len(record.matrices)} matrices, run needs {steps}", field="potential"
        )


class ProblemParser:
    """Parses and validates problem documents."""

    def __init__(self):
        self.top_level_fields = {"signature", "potential", "triple", "run"}
        self.signature_fields = {"m1", "m2"}
        self.triple_fields = {"alpha", "s0", "lambda0", "mode"}
        self.run_fields = {"steps", "z_grid", "t_grid", "tolerance"}
        self.tolerance_fields = {"rel", "abs", "cond_warn"}
        self.potential_fields = {
            "constant-j": {"type"},
            "unitary-list": {"type", "unitaries"},
            "random-unitary": {"type", "seed"},
            "explicit": {"type", "c"},
        }
        self._text = ""

    def parse_file(self, path: Union[str, Path]) -> ProblemSpec:
        """
        Read and validate a problem file.

        Args:
            path: location of the JSON problem document

        Returns:
            Validated ProblemSpec
        """
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ParseError(f"Error reading problem file {path}: {e}") from e
        return self.parse_text(text)

    def parse_text(self, text: str) -> ProblemSpec:
        self._text = text
        if not text.strip():
            raise ParseError("problem file is empty", line=1)
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"malformed document: {e.msg}", line=e.lineno) from e
        if not isinstance(document, dict):
            raise ParseError("top level must be an object", line=1)

        self._reject_unknown(document, self.top_level_fields, "")
        for name in sorted(self.top_level_fields):
            if name not in document:
                raise ParseError("missing section", field=name)

        signature = self._parse_signature(document["signature"])
        run = self._parse_run(document["run"])
        triple = self._parse_triple(document["triple"], signature)
        potential = self._parse_potential(document["potential"], signature)
        _check_potential_length(potential, run.steps)
        logger.info("Parsed problem: n=%d, m=%d, K=%d, potential %s", triple.n, signature.m, run.steps, potential.kind)
        return ProblemSpec(signature=signature, potential=potential, triple=triple, run=run)

    def _line_of(self, key: str) -> Optional[int]:
        position = self._text.find(f'"{key}"')
        if position < 0:
            return None
        return self._text.count("\n", 0, position) + 1

    def _error(self, message: str, name: str) -> ParseError:
        return ParseError(message, line=self._line_of(name.split(".")[-1]), field=name)

    def _reject_unknown(self, record: Dict, allowed: set, prefix: str) -> None:
        for key in sorted(record):
            if key not in allowed:
                name = f"{prefix}.{key}" if prefix else key
                raise ParseError("unknown field", line=self._line_of(key), field=name)

    def _require_object(self, value: Any, name: str) -> Dict:
        if not isinstance(value, dict):
            raise self._error("expected an object", name)
        return value

    def _require_int(self, value: Any, name: str, minimum: int) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise self._error("expected an integer", name)
        if value < minimum:
            raise self._error(f"must be at least {minimum}", name)
        return value

    def _finite(self, value: Union[int, float], name: str) -> float:
        try:
            number = float(value)
        except OverflowError:
            raise self._error("number does not fit in a double", name) from None
        if not np.isfinite(number):
            raise self._error(f"expected a finite number, got {value}", name)
        return number

    def _require_float(self, value: Any, name: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self._error("expected a number", name)
        return self._finite(value, name)

    def _parse_scalar(self, value: Any, name: str) -> complex:
        if isinstance(value, bool):
            raise self._error("expected a number or [re, im]", name)
        if isinstance(value, (int, float)):
            return complex(self._finite(value, name))
        if isinstance(value, list) and len(value) == 2 and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            return complex(self._finite(value[0], name), self._finite(value[1], name))
        raise self._error("expected a number or [re, im]", name)

    def _parse_matrix(self, value: Any, name: str) -> ComplexMatrix:
        if not isinstance(value, list) or not value or not all(isinstance(row, list) and row for row in value):
            raise self._error("expected a non-empty list of non-empty rows", name)
        width = len(value[0])
        if any(len(row) != width for row in value):
            raise DimensionMismatch("rows have different lengths", field=name)
        return np.array(
            [[self._parse_scalar(v, name) for v in row] for row in value], dtype=np.complex128
        )

    def _parse_signature(self, value: Any) -> SignatureSpec:
        record = self._require_object(value, "signature")
        self._reject_unknown(record, self.signature_fields, "signature")
        m1 = self._require_int(record.get("m1"), "signature.m1", 1)
        m2 = self._require_int(record.get("m2"), "signature.m2", 1)
        return SignatureSpec(m1=m1, m2=m2)

    def _parse_triple(self, value: Any, signature: SignatureSpec) -> GbdtTriple:
        record = self._require_object(value, "triple")
        self._reject_unknown(record, self.triple_fields, "triple")
        for name in ("alpha", "s0", "lambda0"):
            if name not in record:
                raise self._error("missing matrix", f"triple.{name}")
        alpha = self._parse_matrix(record["alpha"], "triple.alpha")
        s0 = self._parse_matrix(record["s0"], "triple.s0")
        lambda0 = self._parse_matrix(record["lambda0"], "triple.lambda0")
        mode = record.get("mode", "strict")
        if mode not in MODES:
            raise self._error(f"mode must be one of {MODES}", "triple.mode")
        n = alpha.shape[0]
        if alpha.shape != (n, n):
            raise DimensionMismatch(f"alpha must be square, got {alpha.shape}", field="triple.alpha")
        if s0.shape != (n, n):
            raise DimensionMismatch(f"s0 must be {n}×{n}, got {s0.shape}", field="triple.s0")
        if lambda0.shape != (n, signature.m):
            raise DimensionMismatch(
                f"lambda0 must be {n}×{signature.m} (n × m1+m2), got {lambda0.shape}", field="triple.lambda0"
            )
        return GbdtTriple(alpha=alpha, s0=s0, lambda0=lambda0, mode=mode)

    def _parse_potential(self, value: Any, signature: SignatureSpec) -> PotentialRecord:
        record = self._require_object(value, "potential")
        kind = record.get("type")
        if kind not in self.potential_fields:
            raise UnknownGenerator(
                f"unknown potential type {kind!r}; expected one of {GENERATORS}",
                line=self._line_of("type"),
                field="potential.type",
            )
        self._reject_unknown(record, self.potential_fields[kind], "potential")
        if kind == "constant-j":
            return PotentialRecord(kind=kind)
        if kind == "random-unitary":
            if "seed" not in record:
                raise self._error("random-unitary needs a seed", "potential.seed")
            return PotentialRecord(kind=kind, seed=self._require_int(record["seed"], "potential.seed", 0))

        key = "unitaries" if kind == "unitary-list" else "c"
        items = record.get(key)
        if not isinstance(items, list) or not items:
            raise self._error("expected a non-empty list of matrices", f"potential.{key}")
        matrices = []
        for k, item in enumerate(items):
            matrix = self._parse_matrix(item, f"potential.{key}")
            if matrix.shape != (signature.m, signature.m):
                raise DimensionMismatch(
                    f"entry {k} has shape {matrix.shape}, expected {(signature.m, signature.m)}", field=f"potential.{key}"
                )
            matrices.append(matrix)
        return PotentialRecord(kind=kind, matrices=tuple(matrices))

    def _parse_run(self, value: Any) -> RunSettings:
        record = self._require_object(value, "run")
        self._reject_unknown(record, self.run_fields, "run")
        steps = self._require_int(record.get("steps"), "run.steps", 1)

        z_grid = record.get("z_grid", "auto")
        if z_grid == "auto":
            z_grid = None
        elif isinstance(z_grid, list) and z_grid:
            z_grid = tuple(self._parse_scalar(z, "run.z_grid") for z in z_grid)
        else:
            raise self._error('expected "auto" or a non-empty list of [re, im] points', "run.z_grid")

        t_grid = record.get("t_grid", "auto")
        if t_grid == "auto":
            t_grid = None
        elif isinstance(t_grid, list) and t_grid:
            t_grid = tuple(self._require_float(t, "run.t_grid") for t in t_grid)
        else:
            raise self._error('expected "auto" or a non-empty list of times', "run.t_grid")

        base = default_tolerance()
        tolerance = base
        if "tolerance" in record:
            tol_record = self._require_object(record["tolerance"], "run.tolerance")
            self._reject_unknown(tol_record, self.tolerance_fields, "run.tolerance")
            try:
                tolerance = Tolerance(
                    rel=self._require_float(tol_record.get("rel", base.rel), "run.tolerance.rel"),
                    abs=self._require_float(tol_record.get("abs", base.abs), "run.tolerance.abs"),
                    cond_warn=self._require_float(tol_record.get("cond_warn", base.cond_warn), "run.tolerance.cond_warn"),
                )
            except ValueError as e:
                raise self._error(str(e), "run.tolerance") from e
        return RunSettings(steps=steps, z_grid=z_grid, t_grid=t_grid, tolerance=tolerance)


def parse_problem(path: Union[str, Path]) -> ProblemSpec:
    """Parse a problem file; see ProblemParser."""
    return ProblemParser().parse_file(path)


def parse_problem_text(text: str) -> ProblemSpec:
    return ProblemParser().parse_text(text)

