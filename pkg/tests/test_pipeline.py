import dataclasses
import json

import pytest

from errors import ParseError
from pipeline import (
    EXIT_NUMERICAL,
    EXIT_PASS,
    EXIT_VERDICT_FAIL,
    STAGES,
    GbdtPipeline,
    resolve_commands,
    run_pipeline,
)
from problem_parser import parse_problem, parse_problem_text
from report_generator import GbdtReportGenerator


@pytest.fixture
def scalar_spec(data_dir):
    return parse_problem(data_dir / "scalar_fixture.json")


class TestResolveCommands:
    def test_dependencies_added(self):
        assert resolve_commands(["fundamental"]) == ["validate", "iterate", "fundamental"]

    def test_execution_order(self):
        assert resolve_commands(["nonstationary", "darboux"]) == ["validate", "iterate", "darboux", "nonstationary"]

    def test_unknown_command(self):
        with pytest.raises(ParseError):
            resolve_commands(["plot"])


class TestScalarFixtureRun:
    def test_all_stages_pass(self, scalar_spec):
        report = run_pipeline(scalar_spec, STAGES)
        assert report.verdict == "pass"
        assert report.exit_code == EXIT_PASS
        assert {name: r.status for name, r in report.stages.items()} == {name: "pass" for name in STAGES}
        assert set(report.tables) == {"potential", "steps", "intertwining", "factorization", "nonstationary"}
        assert len(report.z_grid) == 12
        assert report.t_grid == pytest.approx([-0.5, -0.25, 0.0, 0.25, 0.5])

    def test_tables(self, scalar_spec):
        report = run_pipeline(scalar_spec, STAGES)
        steps = report.tables["steps"]
        assert list(steps["k"]) == [0, 1, 2, 3]
        grid = report.tables["intertwining"]
        assert {"intertwining_residual", "transfer_inverse_residual", "conjugation_agreement"} <= set(grid.columns)
        assert len(grid) == 12 * 4
        assert len(report.tables["nonstationary"]) == 3 * 5
        assert report.summary["max_conjugation_agreement"] <= 1e-12

    def test_partial_run(self, scalar_spec):
        report = run_pipeline(scalar_spec, ["darboux"])
        assert report.commands == ["validate", "iterate", "darboux"]
        assert "conjugation_agreement" not in report.tables["intertwining"].columns

    def test_deterministic(self, scalar_spec):
        generator = GbdtReportGenerator(include_timings=False)
        first = generator.render_json(run_pipeline(scalar_spec))
        second = generator.render_json(run_pipeline(scalar_spec))
        assert first == second

    def test_weak_mode_skips_factorization(self, scalar_spec):
        document = scalar_spec.to_dict()
        document["triple"]["mode"] = "weak"
        report = run_pipeline(parse_problem_text(json.dumps(document)))
        assert report.stages["factorize"].status == "skipped"
        assert report.verdict == "pass"


class TestFailures:
    def test_weak_singular(self, data_dir):
        report = run_pipeline(parse_problem(data_dir / "weak_singular.json"))
        assert report.exit_code == EXIT_NUMERICAL
        assert report.failing_stage == "iterate"
        assert "SingularS(1)" in report.error
        assert report.stages["darboux"].status == "skipped"

    def test_strict_inadmissible(self, data_dir):
        report = run_pipeline(parse_problem(data_dir / "strict_inadmissible.json"))
        assert report.exit_code == EXIT_VERDICT_FAIL
        assert report.failing_stage == "validate"
        assert "i ∈ σ(α)" in report.stages["validate"].failures
        assert report.admissibility["verdict"] == "inadmissible"
        assert report.stages["iterate"].status == "skipped"

    def test_grid_point_on_spectrum(self, scalar_spec):
        document = scalar_spec.to_dict()
        document["run"]["z_grid"] = [[0, 2]]
        report = run_pipeline(parse_problem_text(json.dumps(document)), ["darboux"])
        assert report.exit_code == EXIT_NUMERICAL
        assert "SpectralCollision" in report.error


class TestRandomUnitaryFixture:
    def test_passes(self, data_dir):
        report = run_pipeline(parse_problem(data_dir / "random_unitary.json"))
        assert report.verdict == "pass", report.stages
        assert len(report.tables["factorization"]) == 6
        assert report.t_grid == [-0.25, 0.0, 0.25]


class TestVerificationGates:
    def test_transfer_inverse_bound_is_flat_in_k(self, data_dir):
        spec = parse_problem(data_dir / "random_unitary.json")
        residuals = run_pipeline(spec, ["darboux"]).tables["intertwining"]["transfer_inverse_residual"]
        bound = float(residuals.median())
        pipeline = GbdtPipeline(spec)
        pipeline.bounds = dataclasses.replace(pipeline.bounds, transfer_inverse=bound)
        report = pipeline.run(["darboux"])
        failures = [f for f in report.stages["darboux"].failures if f.startswith("transfer inverse")]
        assert len(failures) == int((residuals > bound).sum())

    def test_finite_difference_convergence_gates_verdict(self, scalar_spec):
        pipeline = GbdtPipeline(scalar_spec)
        pipeline.finite_difference_step = 2.0
        report = pipeline.run(["nonstationary"])
        assert report.exit_code == EXIT_VERDICT_FAIL
        assert report.failing_stage == "nonstationary"
        assert any("not second order" in f for f in report.stages["nonstationary"].failures)

    def test_finite_difference_summary(self, scalar_spec):
        report = run_pipeline(scalar_spec, ["nonstationary"])
        assert 3.0 <= report.summary["finite_difference_min_ratio"] <= report.summary["finite_difference_max_ratio"] <= 5.0
