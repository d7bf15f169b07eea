"""Packaged GFL corpus used by tests, docs, and the pilot simulator."""

from __future__ import annotations

from importlib import resources

CORPUS_FILES = (
    "pending_sales_reports.gfl",
    "sales_report_process.gfl",
    "sales_reports_count.gfl",
    "sum_of_squares.gfl",
    "care_pathway.gfl",
)


def corpus_text(name: str) -> str:
    return resources.files("graphflow").joinpath("corpus", name).read_text(encoding="utf-8")


def corpus_path(name: str) -> str:
    return str(resources.files("graphflow").joinpath("corpus", name))
