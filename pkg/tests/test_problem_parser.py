import json

import numpy as np
import pytest

from errors import DimensionMismatch, NotUnitary, ParseError, UnknownGenerator
from problem_parser import parse_problem, parse_problem_text


def _document(**sections):
    document = {
        "signature": {"m1": 1, "m2": 1},
        "potential": {"type": "constant-j"},
        "triple": {"alpha": [[[0, 2]]], "s0": [[1]], "lambda0": [[2, 0]]},
        "run": {"steps": 3},
    }
    document.update(sections)
    return json.dumps(document, indent=2)


class TestParseProblem:
    def test_scalar_fixture_file(self, data_dir):
        spec = parse_problem(data_dir / "scalar_fixture.json")
        assert (spec.triple.n, spec.signature.m, spec.signature.m1, spec.signature.m2) == (1, 2, 1, 1)
        assert spec.triple.alpha[0, 0] == 2j
        assert spec.triple.mode == "strict"
        assert spec.run.steps == 3
        assert spec.run.z_grid is None and spec.run.t_grid is None

    def test_round_trip(self, data_dir):
        for name in ("scalar_fixture.json", "random_unitary.json", "weak_singular.json"):
            spec = parse_problem(data_dir / name)
            assert parse_problem_text(json.dumps(spec.to_dict())) == spec

    def test_round_trip_with_matrix_potential(self):
        text = _document(
            potential={"type": "unitary-list", "unitaries": [[[0, 1], [1, 0]], [[1, 0], [0, [0, 1]]], [[1, 0], [0, 1]]]},
            run={"steps": 3, "z_grid": [[1.5, 0], [1, 1]], "t_grid": [0, 0.5]},
        )
        spec = parse_problem_text(text)
        assert spec.run.z_grid == (1.5 + 0j, 1 + 1j)
        assert parse_problem_text(json.dumps(spec.to_dict())) == spec
        potential = spec.build_potential()
        np.testing.assert_allclose(potential.c_matrices[0], -np.diag([1.0, -1.0]))

    def test_lambda_column_count(self):
        with pytest.raises(DimensionMismatch) as info:
            parse_problem_text(_document(triple={"alpha": [[[0, 2]]], "s0": [[1]], "lambda0": [[2, 0, 0]]}))
        assert info.value.field == "triple.lambda0"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text("")
        with pytest.raises(ParseError):
            parse_problem(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            parse_problem(tmp_path / "absent.json")

    def test_malformed_document_reports_line(self):
        with pytest.raises(ParseError) as info:
            parse_problem_text('{\n  "signature": {"m1": 1,,}\n}')
        assert info.value.line == 2

    def test_unknown_field(self):
        with pytest.raises(ParseError) as info:
            parse_problem_text(_document(run={"steps": 3, "iterations": 4}))
        assert info.value.field == "run.iterations"
        assert info.value.line is not None

    def test_unknown_generator(self):
        with pytest.raises(UnknownGenerator):
            parse_problem_text(_document(potential={"type": "soliton"}))

    def test_string_scalars_rejected(self):
        with pytest.raises(ParseError):
            parse_problem_text(_document(triple={"alpha": [["2i"]], "s0": [[1]], "lambda0": [[2, 0]]}))

    @pytest.mark.parametrize("entry", ["NaN", "Infinity", "-Infinity", "[0, NaN]"])
    def test_non_finite_entries_rejected(self, entry):
        triple = {"alpha": [["<entry>"]], "s0": [[1]], "lambda0": [[2, 0]]}
        text = _document(triple=triple).replace('"<entry>"', entry)
        with pytest.raises(ParseError) as info:
            parse_problem_text(text)
        assert info.value.field == "triple.alpha"

    def test_integer_beyond_double_range_rejected(self):
        triple = {"alpha": [[[0, 2]]], "s0": [["<entry>"]], "lambda0": [[2, 0]]}
        text = _document(triple=triple).replace('"<entry>"', "1" + "0" * 400)
        with pytest.raises(ParseError) as info:
            parse_problem_text(text)
        assert info.value.field == "triple.s0"

    def test_non_finite_tolerance_rejected(self):
        text = _document(run={"steps": 3, "tolerance": {"rel": "<entry>"}}).replace('"<entry>"', "NaN")
        with pytest.raises(ParseError) as info:
            parse_problem_text(text)
        assert info.value.field == "run.tolerance.rel"

    def test_steps_must_be_positive(self):
        with pytest.raises(ParseError):
            parse_problem_text(_document(run={"steps": 0}))

    def test_short_explicit_potential(self):
        with pytest.raises(DimensionMismatch):
            parse_problem_text(_document(potential={"type": "explicit", "c": [[[1, 0], [0, -1]]]}))

    def test_non_unitary_list(self):
        spec = parse_problem_text(
            _document(
                potential={"type": "unitary-list", "unitaries": [[[1, 1], [0, 1]]]},
                run={"steps": 1},
            )
        )
        with pytest.raises(NotUnitary):
            spec.build_potential()


class TestOverrides:
    def test_steps_and_tolerance(self, data_dir):
        spec = parse_problem(data_dir / "scalar_fixture.json").with_overrides(steps=5, tolerance_rel=1e-9)
        assert spec.run.steps == 5
        assert spec.run.tolerance.rel == 1e-9
        assert spec.run.tolerance.abs == 1e-13

    def test_seed(self, data_dir):
        spec = parse_problem(data_dir / "random_unitary.json").with_overrides(seed=99)
        assert spec.potential.seed == 99

    def test_steps_beyond_listed_potential(self):
        spec = parse_problem_text(
            _document(potential={"type": "explicit", "c": [[[1, 0], [0, -1]]] * 3}, run={"steps": 3})
        )
        with pytest.raises(DimensionMismatch):
            spec.with_overrides(steps=4)
