"""
Report generation for pipeline runs.
Handles JSON, CSV bundle and Excel export of a RunReport.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Union

import numpy as np
import pandas as pd

from errors import ReportIoError
from pipeline import RunReport

logger = logging.getLogger(__name__)

FORMATS = ("json", "csv-bundle", "xlsx")


def to_plain(value: Any) -> Any:
    """Recursively convert to JSON-safe values: complex → [re, im], NaN/Inf → None."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, pd.DataFrame):
        return [to_plain(r) for r in value.to_dict(orient="records")]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return [to_plain(float(value.real)), to_plain(float(value.imag))]
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


class GbdtReportGenerator:
    """Writes a RunReport as JSON, a CSV bundle or an Excel workbook."""

    def __init__(self, include_timings: bool = True):
        self.include_timings = include_timings
        self.float_format = "%.17g"
        self.table_files = {
            "steps": "steps.csv",
            "intertwining": "intertwining.csv",
            "nonstationary": "nonstationary.csv",
            "factorization": "factorization.csv",
            "potential": "potential.csv",
        }
        self.sheet_names = {
            "steps": "Steps",
            "intertwining": "Intertwining",
            "nonstationary": "Nonstationary",
            "factorization": "Factorization",
            "potential": "Potential",
        }

    def emit(self, report: RunReport, path: Union[str, Path], fmt: str = "json") -> Path:
        """
        Write the report.

        Args:
            report: completed run report
            path: output file (json, xlsx) or directory (csv-bundle)
            fmt: one of json, csv-bundle, xlsx

        Returns:
            The path written
        """
        path = Path(path)
        try:
            if fmt == "json":
                path.write_text(self.render_json(report), encoding="utf-8")
            elif fmt == "csv-bundle":
                self._write_csv_bundle(report, path)
            elif fmt == "xlsx":
                self._write_workbook(report, path)
            else:
                raise ReportIoError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
        except OSError as e:
            raise ReportIoError(f"Error writing report to {path}: {str(e)}") from e
        logger.info("Wrote %s report to %s", fmt, path)
        return path

    def render_json(self, report: RunReport) -> str:
        document = to_plain(report.to_dict(include_timings=self.include_timings))
        return json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"

    def summary_frame(self, report: RunReport) -> pd.DataFrame:
        """Key/value rows: verdict, per-stage status and the summary metrics."""
        rows = [
            {"key": "version", "value": report.version},
            {"key": "verdict", "value": report.verdict},
            {"key": "exit_code", "value": report.exit_code},
            {"key": "failing_stage", "value": report.failing_stage},
            {"key": "error", "value": report.error},
        ]
        for name, result in report.stages.items():
            rows.append({"key": f"stage.{name}", "value": result.status})
        for key in sorted(report.summary):
            rows.append({"key": key, "value": report.summary[key]})
        if self.include_timings:
            rows.append({"key": "total_seconds", "value": report.total_elapsed})
        for row in rows:
            row["value"] = self._format_value(row["value"])
        return pd.DataFrame(rows, columns=["key", "value"])

    def _format_value(self, value: Any) -> str:
        if value is None:
            return ""
        if isinstance(value, (float, np.floating)):
            return self.float_format % value
        return str(value)

    def _write_csv_bundle(self, report: RunReport, directory: Path):
        directory.mkdir(parents=True, exist_ok=True)
        for name, table in report.tables.items():
            filename = self.table_files.get(name, f"{name}.csv")
            table.to_csv(directory / filename, index=False, float_format=self.float_format, lineterminator="\n")
        self.summary_frame(report).to_csv(directory / "summary.csv", index=False, lineterminator="\n")

    def _write_workbook(self, report: RunReport, path: Path):
        with pd.ExcelWriter(path, engine="openpyxl") as writer:
            self.summary_frame(report).to_excel(writer, sheet_name="Summary", index=False)
            for name, table in report.tables.items():
                sheet_name = self.sheet_names.get(name, name.title())[:31]
                table.to_excel(writer, sheet_name=sheet_name, index=False)


def emit_report(report: RunReport, path: Union[str, Path], fmt: str = "json", include_timings: bool = True) -> Path:
    """Write `report` to `path` in the given format; see GbdtReportGenerator."""
    return GbdtReportGenerator(include_timings=include_timings).emit(report, path, fmt)
