from __future__ import annotations

import json
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from cape.cpl.policy import policy_from_data
from cape.errors import DuplicateIdError
from cape.graph import PredicateGraph, parse_graph
from cape.verifier import (
    STATUS_EVAL_ERROR,
    STATUS_NOT_APPLICABLE,
    STATUS_PASSED,
    STATUS_VIOLATED,
    evaluate_pack,
    evaluate_policy,
    order_key,
    resolve_order,
    serialize_verdict,
)


def make_policy(pid="p.a", tier="T1", priority=0, kind="output", asserts=("true",), where=(), **extra):
    data = {
        "id": pid,
        "tier": tier,
        "priority": priority,
        "scope": {"kind": kind, **extra.get("scope_extra", {})},
        "assert": [{"expr": e} for e in asserts],
    }
    if where:
        data["where"] = [{"expr": e} for e in where]
    if "on_violation" in extra:
        data["on_violation"] = extra["on_violation"]
    return policy_from_data(data)


# --- resolve_order -------------------------------------------------------------


def test_tier_dominates_priority():
    b = make_policy("b", tier="T2", priority=9)
    a = make_policy("a", tier="T1", priority=0)
    assert [p.id for p in resolve_order([b, a])] == ["a", "b"]


def test_alphabetical_tie_break():
    b = make_policy("b", tier="T1")
    a = make_policy("a", tier="T1")
    assert [p.id for p in resolve_order([b, a])] == ["a", "b"]


def test_higher_priority_first_within_tier():
    a = make_policy("a", tier="T3", priority=1)
    b = make_policy("b", tier="T3", priority=5)
    assert [p.id for p in resolve_order([a, b])] == ["b", "a"]


def test_duplicate_ids_rejected():
    with pytest.raises(DuplicateIdError):
        resolve_order([make_policy("a"), make_policy("a")])


@given(
    st.lists(
        st.tuples(
            st.text(alphabet="abcdef", min_size=1, max_size=4),
            st.sampled_from(["T1", "T2", "T3"]),
            st.integers(-5, 5),
        ),
        min_size=3,
        max_size=3,
    )
)
def test_order_key_is_total_order(triples):
    policies = [
        make_policy(f"{pid}.x{i}", tier=tier, priority=priority)
        for i, (pid, tier, priority) in enumerate(triples)
    ]
    keys = [order_key(p) for p in policies]
    # Totality + antisymmetry: exactly one of <, ==, > per pair.
    for i in range(3):
        for j in range(3):
            assert (keys[i] < keys[j]) + (keys[j] < keys[i]) + (keys[i] == keys[j]) == 1
    # Transitivity over the triple.
    a, b, c = keys
    if a <= b and b <= c:
        assert a <= c


# --- evaluate_policy ------------------------------------------------------------


def test_calc_matches_violated(calc_graph, calc_policy):
    result = evaluate_policy(calc_policy, calc_graph)
    assert result.status == STATUS_VIOLATED
    assert len(result.violations) == 1
    v = result.violations[0]
    assert v.message == "7.1 != 7.095"
    assert v.expected == Fraction(7095, 1000)
    assert v.actual == Fraction(71, 10)
    assert v.tier == "T1"
    assert v.element_index == 0
    assert v.assert_index == 0


def test_where_false_means_not_applicable(calc_policy):
    graph = parse_graph('{"schema_version":"1.0.0","tool_calls":[{"name":"calc","arguments":{"value":1}}]}')
    result = evaluate_policy(calc_policy, graph)
    assert result.status == STATUS_NOT_APPLICABLE
    assert result.violations == ()


def test_no_scope_match_means_not_applicable(calc_policy):
    graph = parse_graph(
        '{"schema_version":"1.0.0",'
        '"operations":[{"op_type":"M","inputs":[1],"output":1}],'
        '"tool_calls":[{"name":"search","arguments":{"value":1}}]}'
    )
    result = evaluate_policy(calc_policy, graph)
    assert result.status == STATUS_NOT_APPLICABLE


def test_passing_policy(calc_graph):
    policy = make_policy("p.count", asserts=("count(operations) > 0",))
    assert evaluate_policy(policy, calc_graph).status == STATUS_PASSED


def test_eval_error_status_and_diagnostic(calc_graph):
    policy = make_policy("p.broken", asserts=("first(entities).text == 'x'",))
    result = evaluate_policy(policy, calc_graph)
    assert result.status == STATUS_EVAL_ERROR
    assert result.violations == ()
    assert len(result.diagnostics) == 1
    assert "EmptyCollection" in result.diagnostics[0].message


def test_violated_wins_over_eval_error(calc_graph):
    policy = make_policy("p.mixed", asserts=("false", "first(entities).text == 'x'"))
    result = evaluate_policy(policy, calc_graph)
    assert result.status == STATUS_VIOLATED
    assert len(result.violations) == 1 and len(result.diagnostics) == 1


def test_non_boolean_assert_is_diagnostic(calc_graph):
    policy = make_policy("p.notbool", asserts=("count(operations)",))
    result = evaluate_policy(policy, calc_graph)
    assert result.status == STATUS_EVAL_ERROR


def test_generic_violation_rendering(calc_graph):
    policy = make_policy("p.generic", asserts=("count(entities) > 0",))
    result = evaluate_policy(policy, calc_graph)
    v = result.violations[0]
    assert v.expected == "assertion true"
    assert v.actual == "false"
    assert v.message == "false != assertion true"


def test_expected_actual_sides_follow_binding(calc_graph):
    # Binding side is actual regardless of writing order.
    p = make_policy(
        "p.flip",
        kind="tool_call",
        asserts=("last(operations).output == tool_call.arguments.value",),
        scope_extra={"filter": {"name": "calc"}},
    )
    v = evaluate_policy(p, calc_graph).violations[0]
    assert v.actual == Fraction(71, 10)
    assert v.expected == Fraction(7095, 1000)


# --- evaluate_pack --------------------------------------------------------------


def twelve_policies(calc_policy):
    passing = [
        make_policy("p.claims_exist", tier="T3", asserts=("count(claims) > 0",)),
        make_policy("p.single_tool", tier="T3", asserts=("count(tool_calls) <= 1",)),
        make_policy("p.ops_have_inputs", tier="T1", kind="operation", asserts=("count(operation.inputs) > 0",)),
        make_policy("p.op_is_multiply", tier="T2", kind="operation", asserts=("operation.op_type == 'MULTIPLY'",)),
        make_policy("p.factual_claims", tier="T3", kind="claim", asserts=("claim.modality == 'factual'",)),
        make_policy("p.no_code", tier="T2", asserts=("count(code_blocks) == 0",)),
        make_policy("p.no_eval", tier="T2", kind="code_block", asserts=("not(contains(code_block.content, 'eval('))",)),
        make_policy("p.calc_named", tier="T2", kind="tool_call", asserts=("tool_call.name != ''",)),
        make_policy("p.outputs_positive", tier="T1", kind="operation", asserts=("operation.output > 0",)),
        make_policy("p.claim_text", tier="T3", kind="claim", asserts=("claim.text != ''",)),
        make_policy("p.sane_version", tier="T3", asserts=("count(operations) < 100",)),
    ]
    return [calc_policy, *passing]


def test_twelve_policy_verdict_shape(calc_graph, calc_policy):
    verdict = evaluate_pack(twelve_policies(calc_policy), calc_graph, "example_847")
    assert verdict.policies_evaluated == 12
    assert verdict.policies_passed == 11
    assert len(verdict.violations) == 1
    assert verdict.violations[0].message == "7.1 != 7.095"


def test_empty_policy_list(calc_graph):
    verdict = evaluate_pack([], calc_graph, "none")
    assert (verdict.policies_evaluated, verdict.policies_passed, verdict.violations) == (0, 0, ())


def test_not_applicable_counts_as_passed(calc_policy):
    graph = PredicateGraph()
    verdict = evaluate_pack([calc_policy], graph, "empty")
    assert verdict.policies_passed == 1
    assert verdict.results[0].status == STATUS_NOT_APPLICABLE


def test_count_identity_random(calc_graph, calc_policy):
    verdict = evaluate_pack(twelve_policies(calc_policy), calc_graph, "x")
    non_passed = sum(1 for r in verdict.results if r.status in (STATUS_VIOLATED, STATUS_EVAL_ERROR))
    assert verdict.policies_evaluated == verdict.policies_passed + non_passed


def test_tier_monotone_violation_order(calc_graph):
    policies = [
        make_policy("z.t1", tier="T1", asserts=("count(entities) > 0",)),
        make_policy("a.t3", tier="T3", asserts=("count(entities) > 0",)),
        make_policy("m.t2", tier="T2", asserts=("count(entities) > 0",)),
    ]
    verdict = evaluate_pack(policies, calc_graph, "x")
    tiers = [v.tier for v in verdict.violations]
    assert tiers == sorted(tiers)


def test_violation_order_within_policy(calc_graph):
    graph = parse_graph(
        json.dumps(
            {
                "schema_version": "1.0.0",
                "claims": [
                    {"text": "a", "modality": "factual"},
                    {"text": "b", "modality": "factual"},
                ],
            }
        )
    )
    policy = make_policy("p.two", kind="claim", asserts=("it_is_fine" and "false", "false"))
    verdict = evaluate_pack([policy], graph, "x")
    keys = [(v.element_index, v.assert_index) for v in verdict.violations]
    assert keys == sorted(keys)


def test_verdict_serialization_is_stable(calc_graph, calc_policy):
    first = serialize_verdict(evaluate_pack([calc_policy], calc_graph, "example_847"))
    for _ in range(50):
        again = serialize_verdict(evaluate_pack([calc_policy], calc_graph, "example_847"))
        assert again == first


def test_verdict_details_section(calc_graph, calc_policy):
    verdict = evaluate_pack([calc_policy], calc_graph, "example_847")
    data = json.loads(serialize_verdict(verdict, details=True))
    assert data["details"][0]["policy_id"] == "policy.tool.calc_matches"
    assert data["details"][0]["status"] == "violated"
    assert data["details"][0]["violations"][0]["element_index"] == 0


def test_filter_scope_by_field(calc_graph):
    policy = make_policy(
        "p.search_only",
        kind="tool_call",
        asserts=("false",),
        scope_extra={"filter": {"name": "search"}},
    )
    assert evaluate_policy(policy, calc_graph).status == STATUS_NOT_APPLICABLE


def test_random_determinism_small():
    rng = random.Random(1)
    from tests._gen import random_graph

    graph = random_graph(rng)
    policies = [
        make_policy("p.a", tier="T2", asserts=("count(claims) >= 0",)),
        make_policy("p.b", tier="T1", kind="operation", asserts=("operation.output == 0",)),
    ]
    baseline = serialize_verdict(evaluate_pack(policies, graph, "r"))
    for _ in range(100):
        assert serialize_verdict(evaluate_pack(policies, graph, "r")) == baseline
