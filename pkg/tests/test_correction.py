from __future__ import annotations

import json
from fractions import Fraction

import pytest

from cape.correction import (
    CONSTRAINED_REWRITE,
    DETERMINISTIC_PATCH,
    TEMPLATE_INSERT,
    apply_deterministic,
    apply_template,
    correct,
    select_strategy,
    serialize_correction_result,
)
from cape.cpl.policy import policy_from_data
from cape.errors import TemplateError
from cape.graph import canonical_serialize, graph_to_data, parse_graph, validate_graph
from cape.scripted import BrokenRewriter, ScriptedRewriter
from cape.verifier import evaluate_pack


CITED_POLICY = policy_from_data(
    {
        "id": "policy.citation.factual_claims_cited",
        "tier": "T2",
        "scope": {"kind": "claim", "filter": {"modality": "factual"}},
        "assert": [{"expr": "count(claim.citation_ids) > 0"}],
        "on_violation": {
            "action": "CORRECT",
            "correction_hint": "Attach a citation",
            "template": "[citation needed: {text}]",
        },
    }
)

NO_EVAL_POLICY = policy_from_data(
    {
        "id": "policy.code.no_eval",
        "tier": "T2",
        "scope": {"kind": "code_block"},
        "assert": [{"expr": "not(contains(code_block.content, 'eval('))"}],
        "on_violation": {"action": "CORRECT", "correction_hint": "Replace eval() with a safe parser"},
    }
)


def uncited_graph():
    return parse_graph(
        json.dumps(
            {
                "schema_version": "1.0.0",
                "claims": [{"text": "The sky is blue", "modality": "factual"}],
            }
        )
    )


def eval_graph():
    return parse_graph(
        json.dumps(
            {
                "schema_version": "1.0.0",
                "code_blocks": [{"language_tag": "python", "content": "x = eval(raw)"}],
            }
        )
    )


# --- select_strategy -----------------------------------------------------------


def test_calc_violation_selects_deterministic(calc_graph, calc_policy):
    verdict = evaluate_pack([calc_policy], calc_graph, "x")
    assert select_strategy(verdict.violations[0], calc_policy, calc_graph) == DETERMINISTIC_PATCH


def test_missing_citation_selects_template():
    graph = uncited_graph()
    verdict = evaluate_pack([CITED_POLICY], graph, "x")
    assert select_strategy(verdict.violations[0], CITED_POLICY, graph) == TEMPLATE_INSERT


def test_eval_violation_selects_rewrite():
    graph = eval_graph()
    verdict = evaluate_pack([NO_EVAL_POLICY], graph, "x")
    assert select_strategy(verdict.violations[0], NO_EVAL_POLICY, graph) == CONSTRAINED_REWRITE


def test_both_sides_bound_is_not_deterministic(calc_graph):
    policy = policy_from_data(
        {
            "id": "p.self",
            "tier": "T1",
            "scope": {"kind": "tool_call"},
            "assert": [{"expr": "tool_call.arguments.value == tool_call.arguments.value + 1"}],
            "on_violation": {"action": "CORRECT"},
        }
    )
    verdict = evaluate_pack([policy], calc_graph, "x")
    assert select_strategy(verdict.violations[0], policy, calc_graph) == CONSTRAINED_REWRITE


# --- apply_deterministic --------------------------------------------------------


def test_patch_calc_value(calc_graph, calc_policy):
    verdict = evaluate_pack([calc_policy], calc_graph, "x")
    patched, patches = apply_deterministic(calc_graph, verdict.violations[0], calc_policy)
    assert patches[0].path == "/tool_calls/0/arguments/value"
    assert patches[0].old == Fraction(71, 10)
    assert patches[0].new == Fraction(7095, 1000)
    assert patched.tool_calls[0].arguments["value"] == Fraction(7095, 1000)
    # Re-evaluation passes now.
    assert not evaluate_pack([calc_policy], patched, "x").violations
    # Original untouched.
    assert calc_graph.tool_calls[0].arguments["value"] == Fraction(71, 10)


def test_stale_violation_is_identity(calc_graph, calc_policy):
    verdict = evaluate_pack([calc_policy], calc_graph, "x")
    patched, _ = apply_deterministic(calc_graph, verdict.violations[0], calc_policy)
    again, patches = apply_deterministic(patched, verdict.violations[0], calc_policy)
    assert again == patched
    assert len(patches) == 1  # identity patch still recorded
    assert patches[0].old == patches[0].new


def test_patch_minimality(calc_graph, calc_policy):
    verdict = evaluate_pack([calc_policy], calc_graph, "x")
    patched, _ = apply_deterministic(calc_graph, verdict.violations[0], calc_policy)
    before = graph_to_data(calc_graph)
    after = graph_to_data(patched)
    before["tool_calls"][0]["arguments"].pop("value")
    after["tool_calls"][0]["arguments"].pop("value")
    assert before == after  # nothing but the patched path differs


def test_span_aware_text_patch(calc_policy):
    source = "I'll compute 15% of 47.30 with calc(value=7.1) now."
    start = source.index("calc(")
    end = start + len("calc(value=7.1)")
    graph = parse_graph(
        json.dumps(
            {
                "schema_version": "1.0.0",
                "operations": [{"op_type": "MULTIPLY", "inputs": [47.30, 0.15], "output": 7.095}],
                "tool_calls": [
                    {"name": "calc", "arguments": {"value": 7.1}, "span": {"start": start, "end": end}}
                ],
                "claims": [
                    {
                        "text": "done",
                        "modality": "factual",
                        "span": {"start": len(source) - 4, "end": len(source)},
                    }
                ],
                "source_text": source,
            }
        )
    )
    verdict = evaluate_pack([calc_policy], graph, "x")
    patched, _ = apply_deterministic(graph, verdict.violations[0], calc_policy)
    assert patched.source_text == source[:start] + "7.095" + source[end:]
    assert validate_graph(patched) == []
    # The trailing claim's span shifted with the text edit.
    claim_span = patched.claims[0].span
    assert patched.source_text[claim_span.start : claim_span.end] == "now."


# --- apply_template -------------------------------------------------------------


def test_template_appends_citation_and_links():
    graph = uncited_graph()
    verdict = evaluate_pack([CITED_POLICY], graph, "x")
    patched, patches = apply_template(graph, verdict.violations[0], CITED_POLICY)
    assert len(patched.citations) == 1
    citation = patched.citations[0]
    assert citation.id == "auto_0"
    assert citation.document_id == "[citation needed: The sky is blue]"
    assert patched.claims[0].citation_ids == ("auto_0",)
    assert len(patches) == 2
    # The citation policy passes after insertion.
    assert not evaluate_pack([CITED_POLICY], patched, "x").violations


def test_template_unbound_placeholder():
    policy = policy_from_data(
        {
            "id": "p.bad_template",
            "tier": "T2",
            "scope": {"kind": "claim", "filter": {"modality": "factual"}},
            "assert": [{"expr": "count(claim.citation_ids) > 0"}],
            "on_violation": {"action": "CORRECT", "template": "[{nonexistent_field}]"},
        }
    )
    graph = uncited_graph()
    verdict = evaluate_pack([policy], graph, "x")
    with pytest.raises(TemplateError) as err:
        apply_template(graph, verdict.violations[0], policy)
    assert "nonexistent_field" in str(err.value)


def test_template_stale_is_identity():
    graph = uncited_graph()
    verdict = evaluate_pack([CITED_POLICY], graph, "x")
    patched, _ = apply_template(graph, verdict.violations[0], CITED_POLICY)
    again, patches = apply_template(patched, verdict.violations[0], CITED_POLICY)
    assert again == patched
    assert patches == []


def test_template_appends_to_source_text():
    data = {
        "schema_version": "1.0.0",
        "claims": [{"text": "The sky is blue", "modality": "factual", "span": {"start": 0, "end": 15}}],
        "source_text": "The sky is blue",
    }
    graph = parse_graph(json.dumps(data))
    verdict = evaluate_pack([CITED_POLICY], graph, "x")
    patched, _ = apply_template(graph, verdict.violations[0], CITED_POLICY)
    assert patched.source_text == "The sky is blue[citation needed: The sky is blue]"
    span = patched.citations[0].span
    assert patched.source_text[span.start : span.end] == "[citation needed: The sky is blue]"
    assert validate_graph(patched) == []


# --- correct ---------------------------------------------------------------------


def test_correct_full_calc_fixture(calc_graph, calc_policy):
    verdict = evaluate_pack([calc_policy], calc_graph, "x")
    result = correct(calc_graph, verdict, [calc_policy])
    assert result.accepted
    assert result.strategy == DETERMINISTIC_PATCH
    assert len(result.patches) == 1
    assert not result.reverify_verdict.violations
    # Independent re-verification, not trusting the recorded verdict.
    assert not evaluate_pack([calc_policy], result.corrected_graph, "x").violations


def test_correct_clean_verdict_is_identity(calc_graph, calc_policy):
    patched_first = correct(
        calc_graph, evaluate_pack([calc_policy], calc_graph, "x"), [calc_policy]
    ).corrected_graph
    verdict = evaluate_pack([calc_policy], patched_first, "x")
    result = correct(patched_first, verdict, [calc_policy])
    assert result.accepted
    assert result.patches == ()
    assert result.corrected_graph == patched_first
    assert result.strategy is None


def test_correct_idempotence(calc_graph, calc_policy):
    first = correct(calc_graph, evaluate_pack([calc_policy], calc_graph, "x"), [calc_policy])
    assert first.accepted
    second = correct(
        first.corrected_graph,
        evaluate_pack([calc_policy], first.corrected_graph, "x"),
        [calc_policy],
    )
    assert second.accepted and second.patches == ()


def test_rewrite_without_provider_not_accepted():
    graph = eval_graph()
    verdict = evaluate_pack([NO_EVAL_POLICY], graph, "x")
    result = correct(graph, verdict, [NO_EVAL_POLICY])
    assert not result.accepted
    assert any("no rewrite provider" in f.reason for f in result.failures)


def test_rewrite_with_scripted_provider():
    graph = eval_graph()
    verdict = evaluate_pack([NO_EVAL_POLICY], graph, "x")
    result = correct(graph, verdict, [NO_EVAL_POLICY], rewrite_provider=ScriptedRewriter())
    assert result.accepted
    assert result.strategy == CONSTRAINED_REWRITE
    assert not evaluate_pack([NO_EVAL_POLICY], result.corrected_graph, "x").violations


def test_rewrite_that_still_fails_is_rejected():
    graph = eval_graph()
    verdict = evaluate_pack([NO_EVAL_POLICY], graph, "x")
    result = correct(graph, verdict, [NO_EVAL_POLICY], rewrite_provider=BrokenRewriter())
    assert not result.accepted
    assert result.reverify_verdict.violations


def test_failed_rewrite_still_records_corrected_text():
    data = {
        "schema_version": "1.0.0",
        "code_blocks": [{"language_tag": "python", "content": "x = eval(raw)"}],
        "source_text": "run x = eval(raw) now",
    }
    graph = parse_graph(json.dumps(data))
    # A provider whose candidate re-extracts fine but still violates.
    data["source_text"] = "tried, but kept x = eval(raw)"
    still_bad = canonical_serialize(parse_graph(json.dumps(data)))

    def lazy_provider(text, violations, hint, seed):
        return still_bad

    verdict = evaluate_pack([NO_EVAL_POLICY], graph, "x")
    result = correct(graph, verdict, [NO_EVAL_POLICY], rewrite_provider=lazy_provider)
    assert not result.accepted  # re-verification still fails
    assert result.corrected_text == "tried, but kept x = eval(raw)"  # recorded, not trainable
    assert result.text_edit_distance is not None


def test_rewrite_provider_error_is_per_violation_failure():
    def exploding(text, violations, hint, seed):
        raise RuntimeError("provider crashed")

    graph = eval_graph()
    verdict = evaluate_pack([NO_EVAL_POLICY], graph, "x")
    result = correct(graph, verdict, [NO_EVAL_POLICY], rewrite_provider=exploding)
    assert not result.accepted
    assert any("rewrite failed" in f.reason for f in result.failures)


def test_reject_action_blocks_acceptance(calc_graph):
    gate = policy_from_data(
        {
            "id": "p.gate",
            "tier": "T2",
            "scope": {"kind": "output"},
            "assert": [{"expr": "count(claims) == 0"}],
            "on_violation": {"action": "REJECT"},
        }
    )
    verdict = evaluate_pack([gate], calc_graph, "x")
    result = correct(calc_graph, verdict, [gate])
    assert not result.accepted
    assert any("REJECT" in f.reason for f in result.failures)


def test_warn_action_does_not_block(calc_graph):
    warn = policy_from_data(
        {
            "id": "p.warn",
            "tier": "T3",
            "scope": {"kind": "output"},
            "assert": [{"expr": "count(claims) == 0"}],
            "on_violation": {"action": "WARN"},
        }
    )
    verdict = evaluate_pack([warn], calc_graph, "x")
    result = correct(calc_graph, verdict, [warn])
    assert result.accepted
    assert result.patches == ()


def test_conflicting_patches_higher_tier_wins(calc_graph):
    t1 = policy_from_data(
        {
            "id": "p.t1_sets_value",
            "tier": "T1",
            "scope": {"kind": "tool_call", "filter": {"name": "calc"}},
            "assert": [{"expr": "tool_call.arguments.value == last(operations).output"}],
            "on_violation": {"action": "CORRECT"},
        }
    )
    t3 = policy_from_data(
        {
            "id": "p.t3_sets_value",
            "tier": "T3",
            "scope": {"kind": "tool_call", "filter": {"name": "calc"}},
            "assert": [{"expr": "tool_call.arguments.value == 0 - 1"}],
            "on_violation": {"action": "CORRECT"},
        }
    )
    verdict = evaluate_pack([t1, t3], calc_graph, "x")
    result = correct(calc_graph, verdict, [t1, t3])
    # The T1 patch lands; the conflicting T3 patch is reported, not applied.
    assert result.corrected_graph.tool_calls[0].arguments["value"] == Fraction(7095, 1000)
    assert any("conflict" in f.reason for f in result.failures)
    assert not result.accepted  # the T3 policy is still violated


def test_correction_result_serializes(calc_graph, calc_policy):
    verdict = evaluate_pack([calc_policy], calc_graph, "x")
    result = correct(calc_graph, verdict, [calc_policy])
    data = json.loads(serialize_correction_result(result))
    assert data["accepted"] is True
    assert data["patches"][0]["path"] == "/tool_calls/0/arguments/value"
    assert data["reverify_verdict"]["violations"] == []


def test_corrected_text_tracks_graph_only_cases(calc_graph, calc_policy):
    verdict = evaluate_pack([calc_policy], calc_graph, "x")
    result = correct(calc_graph, verdict, [calc_policy])
    assert result.corrected_text is None  # no source_text on the fixture
    assert result.text_edit_distance is None


def test_multi_violation_batch():
    data = {
        "schema_version": "1.0.0",
        "operations": [{"op_type": "MULTIPLY", "inputs": [47.30, 0.15], "output": 7.095}],
        "tool_calls": [{"name": "calc", "arguments": {"value": 7.1}}],
        "claims": [{"text": "The product is 7.095", "modality": "factual"}],
        "code_blocks": [{"language_tag": "python", "content": "x = eval(raw)"}],
    }
    graph = parse_graph(json.dumps(data))
    calc_policy = policy_from_data(
        json.loads((__import__("pathlib").Path(__file__).parent / "golden" / "calc_matches.json").read_text())
    )
    policies = [calc_policy, CITED_POLICY, NO_EVAL_POLICY]
    verdict = evaluate_pack(policies, graph, "x")
    assert len(verdict.violations) == 3
    result = correct(graph, verdict, policies, rewrite_provider=ScriptedRewriter())
    assert result.accepted
    final = result.corrected_graph
    assert not evaluate_pack(policies, final, "x").violations
    assert canonical_serialize(final) != canonical_serialize(graph)
