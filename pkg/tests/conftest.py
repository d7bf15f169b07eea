from __future__ import annotations

import pytest

from graphflow.corpus import corpus_text
from graphflow.gfl import parse


@pytest.fixture(scope="session")
def sum_of_squares_source() -> str:
    return corpus_text("sum_of_squares.gfl")


@pytest.fixture(scope="session")
def sales_process_source() -> str:
    return corpus_text("sales_report_process.gfl")


@pytest.fixture(scope="session")
def pending_reports_source() -> str:
    return corpus_text("pending_sales_reports.gfl")


@pytest.fixture(scope="session")
def reports_metric_source() -> str:
    return corpus_text("sales_reports_count.gfl")


@pytest.fixture(scope="session")
def care_pathway_source() -> str:
    return corpus_text("care_pathway.gfl")


@pytest.fixture(scope="session")
def sum_of_squares_decl(sum_of_squares_source):
    return parse(sum_of_squares_source)[0]


@pytest.fixture(scope="session")
def sales_process_decl(sales_process_source):
    return parse(sales_process_source)[0]


@pytest.fixture(scope="session")
def care_pathway_decls(care_pathway_source):
    return parse(care_pathway_source)
