"""
End-to-end tests for the command-line driver.
"""

import json

import pytest

from app import main
from config import ENV_TOLERANCE_REL, default_tolerance


def _run(data_dir, tmp_path, command, problem, *extra):
    out = tmp_path / "report.json"
    code = main([command, "--problem", str(data_dir / problem), "--out", str(out), "--no-timings", *extra])
    return code, out


def test_all_stages_pass(data_dir, tmp_path, capsys):
    code, out = _run(data_dir, tmp_path, "all", "scalar_fixture.json")
    assert code == 0
    document = json.loads(out.read_text(encoding="utf-8"))
    assert document["verdict"] == "pass"
    printed = capsys.readouterr().out
    assert "✅ verdict: pass (exit 0)" in printed
    assert "📄 Report written to" in printed


def test_reports_are_byte_identical(data_dir, tmp_path):
    first = tmp_path / "first.json"
    second = tmp_path / "second.json"
    for out in (first, second):
        main(["all", "--problem", str(data_dir / "scalar_fixture.json"), "--out", str(out), "--no-timings"])
    assert first.read_bytes() == second.read_bytes()


def test_weak_singular_exit_code(data_dir, tmp_path):
    code, out = _run(data_dir, tmp_path, "iterate", "weak_singular.json")
    assert code == 2
    assert json.loads(out.read_text(encoding="utf-8"))["failing_stage"] == "iterate"


def test_inadmissible_exit_code(data_dir, tmp_path):
    code, _ = _run(data_dir, tmp_path, "validate", "strict_inadmissible.json")
    assert code == 1


def test_missing_problem_file(tmp_path, capsys):
    assert main(["validate", "--problem", str(tmp_path / "absent.json")]) == 3
    assert "Problem file rejected" in capsys.readouterr().err


def test_unwritable_report(data_dir, tmp_path):
    out = tmp_path / "missing" / "report.json"
    assert main(["validate", "--problem", str(data_dir / "scalar_fixture.json"), "--out", str(out)]) == 3


def test_usage_error_exit_code(data_dir):
    with pytest.raises(SystemExit) as info:
        main(["iterate", "--problem", str(data_dir / "scalar_fixture.json"), "--steps", "many"])
    assert info.value.code == 3


def test_unknown_command():
    with pytest.raises(SystemExit) as info:
        main(["plot", "--problem", "x.json"])
    assert info.value.code == 3


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert "gbdt 1.0.0" in capsys.readouterr().out


def test_csv_bundle(data_dir, tmp_path):
    out = tmp_path / "bundle"
    code = main(["all", "--problem", str(data_dir / "scalar_fixture.json"), "--out", str(out), "--format", "csv-bundle"])
    assert code == 0
    assert (out / "steps.csv").exists()
    assert (out / "summary.csv").exists()


def test_steps_override(data_dir, tmp_path):
    code, out = _run(data_dir, tmp_path, "iterate", "scalar_fixture.json", "--steps", "5")
    assert code == 0
    document = json.loads(out.read_text(encoding="utf-8"))
    assert document["problem"]["run"]["steps"] == 5
    assert [row["k"] for row in document["tables"]["steps"]] == [0, 1, 2, 3, 4, 5]


def test_environment_tolerance(monkeypatch):
    monkeypatch.setenv(ENV_TOLERANCE_REL, "1e-8")
    assert default_tolerance().rel == 1e-8
    monkeypatch.setenv(ENV_TOLERANCE_REL, "not-a-number")
    assert default_tolerance().rel == 1e-10


def test_non_finite_problem_entry(data_dir, tmp_path, capsys):
    text = (data_dir / "scalar_fixture.json").read_text(encoding="utf-8")
    document = json.loads(text)
    document["triple"]["alpha"] = [["<entry>"]]
    problem = tmp_path / "nan.json"
    problem.write_text(json.dumps(document).replace('"<entry>"', "NaN"), encoding="utf-8")
    assert main(["validate", "--problem", str(problem)]) == 3
    assert "finite" in capsys.readouterr().err
