"""
GBDT toolkit command-line driver.
Parses a problem file, runs the requested stages and writes the report.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from config import VERSION, setup_logging
from errors import GbdtError, ReportIoError
from pipeline import EXIT_SPEC, STAGES, RunReport, run_pipeline
from problem_parser import parse_problem
from report_generator import FORMATS, emit_report

COMMANDS = {
    "validate": "check the potential and the admissibility of the triple",
    "iterate": "run the Λ_k, S_k, C̃_k recursions with per-step diagnostics",
    "darboux": "intertwining and transfer-matrix inverse residuals on the z-grid",
    "fundamental": "compare direct and Darboux-conjugated transformed fundamental solutions",
    "factorize": "construct the unitary factors W_k with C̃_k = W_k* j W_k",
    "nonstationary": "verify Ψ(t) = Y e^{itα} against the non-stationary block system",
    "all": "every stage above",
}

STATUS_ICONS = {"pass": "✅", "fail": "❌", "error": "❌", "skipped": "⚠️"}


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with the problem-error code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_SPEC, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", required=True, type=Path, help="problem file (JSON)")
    common.add_argument("--out", type=Path, help="report path (directory for csv-bundle)")
    common.add_argument("--format", choices=FORMATS, default="json", help="report format")
    common.add_argument("--steps", type=int, help="override run.steps")
    common.add_argument("--seed", type=int, help="override the random-unitary seed")
    common.add_argument("--tolerance-rel", type=float, help="override the relative tolerance")
    common.add_argument("--tolerance-abs", type=float, help="override the absolute tolerance")
    common.add_argument("--no-timings", action="store_true", help="omit wall-clock timings (byte-stable reports)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")

    parser = _ArgumentParser(
        prog="gbdt",
        description="Generalized Bäcklund-Darboux transformations of discrete skew-selfadjoint Dirac systems",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    subparsers = parser.add_subparsers(dest="command", metavar="command", required=True)
    for name, help_text in COMMANDS.items():
        subparsers.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


def show_status(report: RunReport) -> None:
    """Print one status line per stage and the overall verdict."""
    for name, result in report.stages.items():
        icon = STATUS_ICONS.get(result.status, "•")
        line = f"{icon} {name}: {result.status}"
        if result.message:
            line += f" ({result.message})"
        print(line)
        for failure in result.failures[1:4]:
            print(f"     {failure}")
        if len(result.failures) > 4:
            print(f"     ... {len(result.failures) - 4} more")
    icon = "✅" if report.verdict == "pass" else "❌"
    print(f"{icon} verdict: {report.verdict} (exit {report.exit_code})")


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and return the process exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)

    try:
        spec = parse_problem(args.problem).with_overrides(
            steps=args.steps,
            seed=args.seed,
            tolerance_rel=args.tolerance_rel,
            tolerance_abs=args.tolerance_abs,
        )
    except GbdtError as e:
        print(f"❌ Problem file rejected: {e}", file=sys.stderr)
        return EXIT_SPEC

    commands = list(STAGES) if args.command == "all" else [args.command]
    report = run_pipeline(spec, commands)
    show_status(report)

    if args.out is not None:
        try:
            path = emit_report(report, args.out, args.format, include_timings=not args.no_timings)
        except ReportIoError as e:
            print(f"❌ {e}", file=sys.stderr)
            return EXIT_SPEC
        print(f"📄 Report written to {path}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
