"""GraphFlow: a desk-scale workflow platform.

GFL sources compile into diagram graphs, a static verifier admits the
acyclic pure subset to an automation library under Hoare-style contracts,
and a durable event-sourced runtime executes everything else with
deterministic replay, cohort triggers, metrics, and a human task inbox.
"""

from graphflow.gfl import parse, parse_file, serialize, serialize_document
from graphflow.model import build_diagram, detect_forks, topological_order
from graphflow.predicates import eval_predicate, implies
from graphflow.resources import compound_reliability, eval_query
from graphflow.verifier import AutomationLibrary, check_composition, verify_diagram
from graphflow.workspace import Workspace

__version__ = "0.1.0"

__all__ = [
    "AutomationLibrary",
    "Workspace",
    "build_diagram",
    "check_composition",
    "compound_reliability",
    "detect_forks",
    "eval_predicate",
    "eval_query",
    "implies",
    "parse",
    "parse_file",
    "serialize",
    "serialize_document",
    "topological_order",
    "verify_diagram",
    "__version__",
]
