"""Command-line entry points and report artifacts."""

from .main import cli, main
from .report import AnalysisReport, build_report, write_artifacts

__all__ = ["cli", "main", "AnalysisReport", "build_report", "write_artifacts"]
