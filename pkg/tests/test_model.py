"""Diagram building and structural analyses."""

from __future__ import annotations

import pytest

from graphflow.gfl import parse
from graphflow.model import (
    BuildError,
    CycleWitness,
    build_diagram,
    detect_forks,
    find_cycle,
    node_id_key,
    to_interchange,
    topological_order,
)


@pytest.fixture(scope="module")
def squares(sum_of_squares_decl):
    return build_diagram(sum_of_squares_decl)


@pytest.fixture(scope="module")
def sales(sales_process_decl):
    return build_diagram(sales_process_decl)


@pytest.fixture(scope="module")
def pathway(care_pathway_decls):
    decl = next(d for d in care_pathway_decls if d.kind == "diagram")
    return build_diagram(decl)


def brute_force_has_cycle(d) -> bool:
    # Independent oracle: path enumeration with visited-set recursion.
    adj: dict[str, list[str]] = {n.id: [] for n in d.nodes}
    for e in d.edges:
        adj[e.source].append(e.target)

    def walk(nid, seen):
        if nid in seen:
            return True
        return any(walk(t, seen | {nid}) for t in adj[nid])

    return any(walk(n.id, frozenset()) for n in d.nodes)


class TestBuild:
    def test_sum_of_squares_shape(self, squares):
        assert len(squares.nodes) == 6
        assert len(squares.edges) == 5
        assert squares.lanes == ("system",)
        assert squares.core_lanes == frozenset({"system"})

    def test_sales_shape(self, sales):
        assert len(sales.nodes) == 5
        assert len(sales.edges) == 5
        assert ("4", "no", "1") in {(e.source, e.label, e.target) for e in sales.edges}
        assert sales.core_lanes == frozenset()

    def test_pathway_no_core_lanes(self, pathway):
        assert pathway.core_lanes == frozenset()
        assert pathway.lanes == ("patient", "staff", "provider", "medflow", "ehr")

    def test_dangling_target(self):
        src = (
            'diagram "D":\n'
            "  swimlanes:\n"
            '    - "System"\n'
            "  model:\n"
            '    1. [task] "A" @system --> 9:\n'
        )
        with pytest.raises(BuildError) as exc:
            build_diagram(parse(src)[0])
        assert any(e.kind == "dangling-target" and e.subject == "9" for e in exc.value.errors)

    def test_unknown_lane(self):
        src = (
            'diagram "D":\n'
            "  swimlanes:\n"
            '    - "System"\n'
            "  model:\n"
            '    1. [task] "A" @ghost:\n'
        )
        with pytest.raises(BuildError) as exc:
            build_diagram(parse(src)[0])
        assert any(e.kind == "unknown-lane" for e in exc.value.errors)

    def test_core_lane_override(self, sum_of_squares_decl):
        d = build_diagram(sum_of_squares_decl, core_lanes=[])
        assert d.core_lanes == frozenset()

    def test_absent_annotations_are_none(self, sales):
        n2 = sales.node("2")
        assert n2.action is None
        assert n2.requires is None
        assert n2.layout is None
        assert n2.weight is None


class TestNodeIdKey:
    def test_numeric_then_alpha(self):
        ids = ["10", "2", "5b", "1", "5a"]
        assert sorted(ids, key=node_id_key) == ["1", "2", "5a", "5b", "10"]


class TestTopologicalOrder:
    def test_sum_of_squares(self, squares):
        # Oracle: Kahn's algorithm by hand on the 5-edge graph gives 1,2,3,4,5a,5b.
        assert topological_order(squares) == ["1", "2", "3", "4", "5a", "5b"]

    def test_sales_cycle_witness(self, sales):
        w = topological_order(sales)
        assert isinstance(w, CycleWitness)
        assert [(e.source, e.label, e.target) for e in w.edges] == [
            ("4", "no", "1"),
            ("1", "to", "2"),
            ("2", "to", "3"),
            ("3", "to", "4"),
        ]

    def test_single_node(self):
        d = build_diagram(parse('diagram "S":\n  model:\n    1. [task] "A" @x:\n')[0])
        assert topological_order(d) == ["1"]

    def test_pathway_linear(self, pathway):
        assert topological_order(pathway) == ["1", "2", "3", "4", "5", "6", "7", "8", "9"]

    @pytest.mark.parametrize("fixture", ["squares", "sales", "pathway"])
    def test_cycle_iff_brute_force(self, fixture, request):
        d = request.getfixturevalue(fixture)
        assert (find_cycle(d) is not None) == brute_force_has_cycle(d)

    def test_edges_go_forward(self, squares):
        order = topological_order(squares)
        pos = {nid: i for i, nid in enumerate(order)}
        for e in squares.edges:
            assert pos[e.source] < pos[e.target]


class TestForks:
    def test_golden_corpus_fork_free(self, squares, pathway):
        # Oracle: inspect the edge multiset; no node has two `to` out-edges.
        assert detect_forks(squares) == []
        assert detect_forks(pathway) == []

    def test_two_to_edges_is_fork(self):
        src = (
            'diagram "F":\n'
            "  model:\n"
            '    1. [task] "X" @x --> 2 --> 3:\n'
            '    2. [task] "A" @x:\n'
            '    3. [task] "B" @x:\n'
        )
        d = build_diagram(parse(src)[0])
        forks = detect_forks(d)
        assert len(forks) == 1 and forks[0].node == "1"

    def test_decision_branch_is_not_fork(self, squares):
        assert all(f.node != "4" for f in detect_forks(squares))


class TestInterchange:
    def test_shape(self, squares):
        g = to_interchange(squares)
        assert g["acyclic"] is True
        assert len(g["nodes"]) == 6
        assert ["4", "yes", "5a"] in g["edges"]

    def test_cyclic_flag(self, sales):
        g = to_interchange(sales)
        assert g["acyclic"] is False
        assert g["order"] is None
