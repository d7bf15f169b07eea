"""GFL frontend: golden-corpus parsing, round-trips, and error reporting."""

from __future__ import annotations

import pytest

from graphflow.gfl import (
    DiagramDecl,
    MetricDecl,
    ParseError,
    QueryDecl,
    TagFilter,
    FieldFilter,
    TriggerDecl,
    parse,
    serialize,
    serialize_document,
)
from graphflow.predicates import And, Compare, Keyword, Literal, PropertyClaim, VarPath, WithTag


class TestSumOfSquares:
    def test_single_diagram(self, sum_of_squares_decl):
        d = sum_of_squares_decl
        assert isinstance(d, DiagramDecl)
        assert d.slug == "calculate-sum-of-squares-bounded"
        assert d.role == "blueprint"

    def test_counts(self, sum_of_squares_decl):
        d = sum_of_squares_decl
        assert [n.id for n in d.nodes] == ["1", "2", "3", "4", "5a", "5b"]
        assert dict(d.inputs) == {"a": Keyword("number"), "b": Keyword("number")}
        assert len(d.requires) == 2
        assert len(d.ensures) == 1
        assert len(d.properties) == 3

    def test_requires_atoms(self, sum_of_squares_decl):
        d = sum_of_squares_decl
        assert d.requires[0] == Compare("ne", VarPath(("a",)), Literal(None))
        assert d.requires[1] == Compare("ne", VarPath(("b",)), Literal(None))
        assert d.ensures[0] == Compare("gte", VarPath(("return", "sum")), Literal(0))

    def test_edges(self, sum_of_squares_decl):
        d = sum_of_squares_decl
        edges = {(n.id, e.label, e.target) for n in d.nodes for e in n.edges}
        assert edges == {
            ("1", "to", "3"),
            ("2", "to", "3"),
            ("3", "to", "4"),
            ("4", "yes", "5a"),
            ("4", "no", "5b"),
        }

    def test_node3_contract(self, sum_of_squares_decl):
        n3 = sum_of_squares_decl.node("3")
        assert n3.requires == And(
            (
                Compare("ne", VarPath(("aSquared",)), Literal(None)),
                Compare("ne", VarPath(("bSquared",)), Literal(None)),
            )
        )
        assert n3.action.callee == "add"
        assert n3.action.assigns == VarPath(("sum",))

    def test_variables(self, sum_of_squares_decl):
        d = sum_of_squares_decl
        assert dict((p.to_gfl(), v) for p, v in d.variables) == {
            "$.aSquared": 0,
            "$.bSquared": 0,
        }

    def test_throw_action(self, sum_of_squares_decl):
        n5b = sum_of_squares_decl.node("5b")
        assert n5b.action.callee == "throw"
        assert n5b.action.pos == (Literal("Sum exceeds allowed bound"),)
        assert n5b.properties == (PropertyClaim("assumed-boundary"),)

    def test_lane_attr_retained(self, sum_of_squares_decl):
        lane = sum_of_squares_decl.lanes[0]
        assert lane.name == "System"
        assert lane.attrs == (("width", 2),)


class TestSalesProcess:
    def test_counts(self, sales_process_decl):
        d = sales_process_decl
        assert len(d.nodes) == 5
        edges = {(n.id, e.label, e.target) for n in d.nodes for e in n.edges}
        assert len(edges) == 5
        assert ("4", "no", "1") in edges

    def test_decision_condition(self, sales_process_decl):
        n4 = sales_process_decl.node("4")
        assert n4.action.callee == "request-approval"
        assert n4.action.arg("yes") == Compare(
            "eq", VarPath(("submitted",)), Literal(Keyword("approved"))
        )

    def test_meeting_assigned(self, sales_process_decl):
        assert sales_process_decl.node("3").assigned == ("coo", "sales")


class TestPendingReportsQuery:
    def test_query_shape(self, pending_reports_source):
        decls = parse(pending_reports_source)
        assert len(decls) == 1
        q = decls[0]
        assert isinstance(q, QueryDecl)
        assert q.resource_type == Keyword("report")
        assert q.ext_type == "SalesReport"
        assert len(q.filters) == 4

    def test_filters(self, pending_reports_source):
        q = parse(pending_reports_source)[0]
        assert q.filters[0] == TagFilter("with", Keyword("scheduled"))
        assert q.filters[1] == TagFilter("without", Keyword("completed"))
        assert q.filters[2] == FieldFilter(Keyword("date1"), "gte", "2025-01-01")
        assert q.filters[3] == FieldFilter(Keyword("date1"), "lt", "2026-01-01")


class TestReportsMetric:
    def test_metric(self, reports_metric_source):
        m = parse(reports_metric_source)[0]
        assert isinstance(m, MetricDecl)
        assert m.query == "sales-reports-pending"
        assert m.aggregation == "count"


class TestCarePathway:
    def test_declaration_inventory(self, care_pathway_decls):
        kinds = [d.kind for d in care_pathway_decls]
        assert kinds.count("trigger") == 1
        assert kinds.count("query") == 3
        assert kinds.count("diagram") == 1
        assert kinds.count("metric") == 2

    def test_diagram_nodes(self, care_pathway_decls):
        d = next(x for x in care_pathway_decls if x.kind == "diagram")
        assert len(d.nodes) == 9
        assert [lane.name for lane in d.lanes] == ["Patient", "Staff", "Provider", "MedFlow", "EHR"]

    def test_trigger(self, care_pathway_decls):
        t = next(x for x in care_pathway_decls if x.kind == "trigger")
        assert isinstance(t, TriggerDecl)
        assert t.calls == "cognitive-testing-care-pathway"
        assert t.source_query == "cognitive-screening-eligible"
        assert t.schedule == "daily"
        assert t.repeat == "yearly"
        assert t.active and t.auto_start
        assert [a.op for a in t.assignments] == [
            "assign-swimlane-contact",
            "assign-swimlane-contact-by-ext-id",
        ]
        assert t.assignments[1].lane == "provider"
        assert t.assignments[1].term == VarPath(("extData", "usualProviderId"))

    def test_wait_node_filters(self, care_pathway_decls):
        d = next(x for x in care_pathway_decls if x.kind == "diagram")
        n3 = d.node("3")
        assert n3.type == "wait"
        assert n3.action.callee == "await-with-tag"
        filters = n3.action.arg("filters")
        assert filters == (TagFilter("with", Keyword("cognitive-screening-completed")),)

    def test_decision_with_tag(self, care_pathway_decls):
        d = next(x for x in care_pathway_decls if x.kind == "diagram")
        n4 = d.node("4")
        cond = n4.action.arg("yes")
        assert cond == WithTag(
            VarPath(("swimlanes", "patient", "contact")),
            Keyword("cognitive-screening-positive"),
        )
        # Edge written with a space before the arrow still parses.
        assert n4.edges == (d.node("8").edges[0].__class__("yes", "5"),)

    def test_deep_path(self, care_pathway_decls):
        d = next(x for x in care_pathway_decls if x.kind == "diagram")
        arg = d.node("1").action.arg("patientId")
        assert arg == VarPath(("swimlanes", "patient", "contact", "ext-id"))

    def test_meeting_bare_keyword_call(self, care_pathway_decls):
        d = next(x for x in care_pathway_decls if x.kind == "diagram")
        assert d.node("6").action.callee == "next"


class TestEdgeCases:
    def test_empty_input(self):
        assert parse("") == []

    def test_whitespace_only(self):
        assert parse("  \n\n   # just a comment\n") == []

    def test_unknown_construct(self):
        with pytest.raises(ParseError) as exc:
            parse('gadget "X":\n  f: 1\n')
        assert exc.value.line == 1

    def test_error_positions_are_one_based(self):
        with pytest.raises(ParseError) as exc:
            parse('query "Q":\n  resource-type: :r\n  bogus-key: 3\n')
        assert exc.value.line == 3
        assert exc.value.column >= 1

    def test_parse_is_deterministic(self, care_pathway_source):
        assert parse(care_pathway_source) == parse(care_pathway_source)

    def test_crlf_accepted(self, pending_reports_source):
        crlf = pending_reports_source.replace("\n", "\r\n")
        assert parse(crlf) == parse(pending_reports_source)

    def test_maybe_edge_accepted(self):
        src = (
            'diagram "M":\n'
            "  swimlanes:\n"
            '    - "System"\n'
            "  model:\n"
            '    1. [decision] "D" @system :yes--> 2 :no--> 3 :maybe--> 4:\n'
            "      action:\n"
            "        calls: (:condition {\n"
            "          .yes: (:gte $.x 0)\n"
            "        })\n"
            '    2. [milestone] "A" @system:\n'
            "      action:\n"
            "        calls: (:return)\n"
            '    3. [milestone] "B" @system:\n'
            "      action:\n"
            "        calls: (:return)\n"
            '    4. [milestone] "C" @system:\n'
            "      action:\n"
            "        calls: (:return)\n"
        )
        d = parse(src)[0]
        assert [e.label for e in d.node("1").edges] == ["yes", "no", "maybe"]

    def test_duplicate_node_id_rejected(self):
        src = (
            'diagram "D":\n'
            "  model:\n"
            '    1. [task] "A" @x:\n'
            '    1. [task] "B" @x:\n'
        )
        with pytest.raises(ParseError) as exc:
            parse(src)
        assert "duplicate node id" in exc.value.message


class TestRoundTrip:
    @pytest.mark.parametrize(
        "fixture",
        [
            "sum_of_squares_source",
            "sales_process_source",
            "pending_reports_source",
            "reports_metric_source",
            "care_pathway_source",
        ],
    )
    def test_corpus_round_trip(self, fixture, request):
        source = request.getfixturevalue(fixture)
        decls = parse(source)
        assert decls, "corpus file must parse to declarations"
        again = parse(serialize_document(decls))
        assert again == decls

    def test_metric_serialization_mentions_aggregation(self, reports_metric_source):
        m = parse(reports_metric_source)[0]
        assert "aggregation: :count" in serialize(m)

    def test_back_edge_serialization(self, sales_process_decl):
        assert ":no--> 1" in serialize(sales_process_decl)

    def test_double_round_trip_is_identity(self, sum_of_squares_source):
        once = parse(sum_of_squares_source)
        text = serialize_document(once)
        assert serialize_document(parse(text)) == text
