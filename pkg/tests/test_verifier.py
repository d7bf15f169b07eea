"""Admission pipeline: structural checks, obligations, discharge, library."""

from __future__ import annotations

import dataclasses
import random

import pytest

from graphflow.evaluator import ContractViolation, eval_diagram
from graphflow.gfl import parse
from graphflow.model import build_diagram
from graphflow.predicates import (
    And,
    Compare,
    Keyword,
    Literal,
    Proven,
    Refuted,
    Unknown,
    VarPath,
    WithTag,
    eval_predicate,
)
from graphflow.verifier import (
    AdmissionReport,
    Automation,
    AutomationLibrary,
    BindingError,
    check_admissibility,
    check_composition,
    discharge,
    generate_obligations,
    verify_diagram,
)


def P(*segs):
    return VarPath(tuple(segs))


@pytest.fixture(scope="module")
def squares(sum_of_squares_decl):
    return build_diagram(sum_of_squares_decl)


@pytest.fixture(scope="module")
def sales(sales_process_decl):
    return build_diagram(sales_process_decl)


class TestAdmissibility:
    def test_sum_of_squares_ok(self, squares):
        assert check_admissibility(squares) == []

    def test_sales_rejected(self, sales):
        reasons = check_admissibility(sales)
        assert any("cycle" in r for r in reasons)
        assert any(":send-email" in r for r in reasons)
        assert any("lane coverage" in r for r in reasons)
        assert len(reasons) >= 2

    def test_added_back_edge_makes_cycle(self, sum_of_squares_decl):
        from graphflow.gfl.ast import EdgeRef

        decl = sum_of_squares_decl
        nodes = tuple(
            dataclasses.replace(n, edges=(EdgeRef("to", "1"),)) if n.id == "5a" else n
            for n in decl.nodes
        )
        mutated = dataclasses.replace(decl, nodes=nodes)
        reasons = check_admissibility(build_diagram(mutated))
        assert any("cycle" in r for r in reasons)


class TestObligations:
    def test_node3_edge_obligations(self, squares):
        obs = generate_obligations(squares)
        edge_obs = [o for o in obs if o.kind == "edge-composition" and "-> 3" in o.source]
        assert len(edge_obs) == 2  # edges 1->3 and 2->3
        for ob in edge_obs:
            ante = list(ob.antecedent)
            assert Compare("gte", P("aSquared"), Literal(0)) in ante
            assert Compare("gte", P("bSquared"), Literal(0)) in ante
            assert ob.consequent == And(
                (
                    Compare("ne", P("aSquared"), Literal(None)),
                    Compare("ne", P("bSquared"), Literal(None)),
                )
            )

    def test_exit_obligation(self, squares):
        obs = generate_obligations(squares)
        exits = [o for o in obs if o.kind == "diagram-postcondition-exit"]
        assert len(exits) == 1
        ob = exits[0]
        assert "5a" in ob.source
        assert Compare("lte", P("sum"), Literal(1000)) in ob.antecedent
        assert ob.consequent == Compare("gte", P("return", "sum"), Literal(0))

    def test_property_obligations(self, squares):
        obs = generate_obligations(squares)
        props = [o for o in obs if o.kind == "property-empirical"]
        assert {o.claim.kind for o in props} == {"is-deterministic", "is-total", "is-commutative"}

    def test_no_contracts_no_obligations(self):
        src = (
            'diagram "Plain":\n'
            "  swimlanes:\n"
            '    - "System"\n'
            "  model:\n"
            '    1. [task] "A" @system --> 2:\n'
            "      action:\n"
            "        calls: (:add {\n"
            "          .a: 1\n"
            "          .b: 2\n"
            "        })\n"
            "        assigns: $.x\n"
            '    2. [milestone] "B" @system:\n'
            "      action:\n"
            "        calls: (:return {\n"
            "          .x: $.x\n"
            "        })\n"
        )
        d = build_diagram(parse(src)[0])
        assert generate_obligations(d) == []


class TestDischarge:
    def test_sum_of_squares_all_discharged(self, squares):
        obs = discharge(generate_obligations(squares), squares, budget=1000)
        logical = [o for o in obs if o.kind != "property-empirical"]
        empirical = [o for o in obs if o.kind == "property-empirical"]
        assert logical and all(o.status == "proven" for o in logical), [
            o.describe() for o in logical if o.status != "proven"
        ]
        assert len(empirical) == 3
        assert all(o.status == "empirically-passed" for o in empirical)
        assert all(o.samples >= 1000 for o in empirical if o.claim.kind != "assumed-boundary")

    def test_commutativity_oracle(self, squares):
        # Independent oracle for the symmetric function: f(a,b) == f(b,a).
        rng = random.Random(7)
        for _ in range(1000):
            a, b = rng.randint(-1000, 1000), rng.randint(-1000, 1000)
            fwd = eval_diagram(squares, {"a": a, "b": b})
            rev = eval_diagram(squares, {"a": b, "b": a})
            assert (fwd.returned, fwd.threw) == (rev.returned, rev.threw)

    def test_strengthened_requires_refuted(self, sum_of_squares_decl):
        mutated = _with_node_requires(
            sum_of_squares_decl, "5a", Compare("gte", P("sum"), Literal(1))
        )
        d = build_diagram(mutated)
        obs = discharge(generate_obligations(d), d, budget=200)
        refuted = [o for o in obs if o.status == "refuted"]
        assert refuted, [o.describe() for o in obs]
        witness = refuted[0].witness
        assert witness["sum"] == 0
        # Witness satisfies all antecedents and violates the consequent.
        for a in refuted[0].antecedent:
            assert eval_predicate(a, witness) is True
        assert eval_predicate(refuted[0].consequent, witness) is False

    def test_with_tag_antecedent_blocks(self, sum_of_squares_decl):
        tagged = WithTag(P("subject"), Keyword("flagged"))
        mutated = _with_node_requires(
            _with_diagram_requires(sum_of_squares_decl, tagged),
            "1",
            Compare("gte", P("unrelated"), Literal(1)),
        )
        d = build_diagram(mutated)
        obs = discharge(generate_obligations(d), d, budget=10)
        assert any(o.status == "unknown" for o in obs)
        assert not all(o.discharged for o in obs)


def _with_node_requires(decl, node_id, pred):
    nodes = tuple(
        dataclasses.replace(n, requires=pred) if n.id == node_id else n for n in decl.nodes
    )
    return dataclasses.replace(decl, nodes=nodes)


def _with_diagram_requires(decl, extra):
    return dataclasses.replace(decl, requires=decl.requires + (extra,))


class TestAdmission:
    def test_admit_sum_of_squares(self, sum_of_squares_decl):
        lib = AutomationLibrary()
        result = lib.admit(sum_of_squares_decl)
        assert isinstance(result, Automation)
        assert result.requires == (
            Compare("ne", P("a"), Literal(None)),
            Compare("ne", P("b"), Literal(None)),
        )
        assert result.ensures == (Compare("gte", P("return", "sum"), Literal(0)),)

    def test_admit_idempotent(self, sum_of_squares_decl):
        lib = AutomationLibrary()
        first = lib.admit(sum_of_squares_decl)
        second = lib.admit(sum_of_squares_decl)
        assert isinstance(first, Automation)
        assert second is first

    def test_sales_rejected_report(self, sales_process_decl):
        lib = AutomationLibrary()
        result = lib.admit(sales_process_decl)
        assert isinstance(result, AdmissionReport)
        assert not result.admitted
        assert len(result.structural_reasons) >= 2

    def test_admission_deterministic(self, sum_of_squares_decl):
        r1 = verify_diagram(sum_of_squares_decl)
        r2 = verify_diagram(sum_of_squares_decl)
        assert [o.describe() for o in r1.obligations] == [o.describe() for o in r2.obligations]
        assert r1.admitted == r2.admitted


class TestComposition:
    @pytest.fixture()
    def upstream(self, sum_of_squares_decl):
        lib = AutomationLibrary()
        a = lib.admit(sum_of_squares_decl)
        assert isinstance(a, Automation)
        return a

    def _downstream(self, requires_gfl: tuple, inputs=((("a"), Keyword("number")),)):
        src = (
            'diagram "Consumer":\n'
            "  swimlanes:\n"
            '    - "System"\n'
            "  inputs: {\n"
            "    .a: :number\n"
            "  }\n"
        )
        if requires_gfl:
            src += "  requires:\n"
            for r in requires_gfl:
                src += f"    - {r}\n"
        src += (
            "  model:\n"
            '    1. [milestone] "Done" @system:\n'
            "      action:\n"
            "        calls: (:return {\n"
            "          .a: $.a\n"
            "        })\n"
        )
        lib = AutomationLibrary()
        result = lib.admit(parse(src)[0])
        assert isinstance(result, Automation), result
        return result

    def test_numeric_nonnull_composition(self, upstream):
        downstream = self._downstream(("(:ne $.a null)",))
        res = check_composition(upstream, downstream, {"a": "return.sum"})
        assert isinstance(res, Proven)

    def test_boundary_refutation(self, upstream):
        downstream = self._downstream(("(:gte $.a 1)",))
        res = check_composition(upstream, downstream, {"a": "return.sum"})
        assert isinstance(res, Refuted)
        assert res.witness == {"a": 0}

    def test_vacuous_composition(self, upstream):
        downstream = self._downstream(())
        res = check_composition(upstream, downstream, {"a": "return.sum"})
        assert isinstance(res, Proven)

    def test_unbound_input_raises(self, upstream):
        downstream = self._downstream(())
        with pytest.raises(BindingError):
            check_composition(upstream, downstream, {})
