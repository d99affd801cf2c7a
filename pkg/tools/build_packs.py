"""Regenerate the shipped policy packs under packs/.

Pack contents are repo-authored fixtures; this script keeps them valid
against the engine (every policy parses and lints clean, every recorded
graph validates, every clean case passes its pack's core set).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from cape.cpl.policy import lint_policy, policy_from_data  # noqa: E402
from cape.graph import graph_from_data  # noqa: E402
from cape.packs import load_pack, run_pack  # noqa: E402
from cape.values import loads_exact  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent / "packs"


def dump(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def policy(pid, tier, scope, asserts, where=None, action="REJECT", hint=None, template=None, priority=None):
    doc = {"id": pid, "tier": tier, "scope": scope}
    if priority is not None:
        doc["priority"] = priority
    if where:
        doc["where"] = [{"expr": e} for e in where]
    doc["assert"] = [{"expr": e} for e in asserts]
    on_violation = {"action": action}
    if hint:
        on_violation["correction_hint"] = hint
    if template:
        on_violation["template"] = template
    doc["on_violation"] = on_violation
    parsed = policy_from_data(doc)
    warnings = lint_policy(parsed)
    if warnings:
        raise SystemExit(f"{pid}: lint warnings: {[str(w) for w in warnings]}")
    return doc


def case(case_id, prompt, graph):
    # Validate through the same JSON round-trip the pack loader performs.
    graph_from_data(loads_exact(json.dumps(graph)))
    return {"id": case_id, "prompt": prompt, "graph": graph}


def write_pack(name, version, core, extended, cases, core_threshold=0.9, extended_threshold=0.5):
    root = ROOT / name
    dump(root / "manifest.json", {
        "name": name,
        "version": version,
        "core_pass_threshold": core_threshold,
        "extended_pass_threshold": extended_threshold,
    })
    dump(root / "policies" / "core.json", core)
    dump(root / "policies" / "extended.json", extended)
    for c in cases:
        dump(root / "test_cases" / f"{c['id']}.json", c)
    return root


def calc_graph(value, output, with_ops=True):
    data = {
        "schema_version": "1.0.0",
        "tool_calls": [{"name": "calc", "arguments": {"value": value}}],
        "claims": [{"text": "the computed total", "modality": "factual"}],
    }
    if with_ops:
        data["operations"] = [{"op_type": "MULTIPLY", "inputs": [47.30, 0.15], "output": output}]
    return data


def tool_use_pack():
    core = [
        policy(
            "policy.tool.calc_matches", "T1",
            {"kind": "tool_call", "filter": {"name": "calc"}},
            ["tool_call.arguments.value == last(operations).output"],
            where=["count(operations) > 0"],
            action="CORRECT", hint="Update to exact value",
        ),
        policy(
            "policy.tool.known_names", "T2",
            {"kind": "tool_call"},
            ["tool_call.name == 'calc' or tool_call.name == 'search' or tool_call.name == 'lookup'"],
        ),
        policy(
            "policy.tool.requires_reasoning", "T3",
            {"kind": "output"},
            ["count(tool_calls) == 0 or count(operations) > 0"],
        ),
        policy(
            "policy.tool.single_calc", "T3",
            {"kind": "output"},
            ["count(filter(tool_calls, it.name == 'calc')) <= 1"],
        ),
    ]
    extended = [
        policy(
            "policy.tool.inputs_bounded", "T3",
            {"kind": "operation"},
            ["count(operation.inputs) <= 8"],
        ),
    ]
    cases = [
        case("tool_case_clean", "What is 15% of $47.30?", calc_graph(7.095, 7.095)),
        case("tool_case_mismatch", "What is 15% of $47.30?", calc_graph(7.1, 7.095)),
        case("tool_case_no_reasoning", "What is 15% of $47.30?", calc_graph(7.095, 7.095, with_ops=False)),
    ]
    return write_pack("tool-use", "1.0.0", core, extended, cases)


def code_graph(content, language="python"):
    return {
        "schema_version": "1.0.0",
        "code_blocks": [{"language_tag": language, "content": content}],
    }


def code_safety_pack():
    core = [
        policy(
            "policy.code.no_eval", "T2",
            {"kind": "code_block"},
            ["not(contains(code_block.content, 'eval('))"],
            action="CORRECT", hint="Replace eval() with a safe parser",
        ),
        policy(
            "policy.code.no_exec", "T2",
            {"kind": "code_block"},
            ["not(contains(code_block.content, 'exec('))"],
            action="CORRECT", hint="Remove exec() calls",
        ),
        policy(
            "policy.code.no_os_system", "T2",
            {"kind": "code_block"},
            ["not(contains(code_block.content, 'os.system('))"],
        ),
        policy(
            "policy.code.no_hardcoded_secrets", "T2",
            {"kind": "code_block"},
            ["not(matches(code_block.content, '(api_key|password|secret)\\\\s*='))"],
        ),
        policy(
            "policy.code.language_tagged", "T3",
            {"kind": "code_block"},
            ["code_block.language_tag != ''"],
        ),
    ]
    extended = [
        policy(
            "policy.code.no_wildcard_import", "T3",
            {"kind": "code_block", "filter": {"language_tag": "python"}},
            ["not(matches(code_block.content, 'from .+ import \\\\*'))"],
        ),
    ]
    cases = [
        case("code_case_clean", "Parse the config safely.", code_graph("value = parse_literal(raw)")),
        case("code_case_eval", "Parse the config safely.", code_graph("value = eval(raw)")),
        case("code_case_untagged", "Show the snippet.", code_graph("x = 1", language="")),
    ]
    return write_pack("code-safety", "1.0.0", core, extended, cases)


def cite_graph(cited: bool):
    data = {
        "schema_version": "1.0.0",
        "claims": [{
            "text": "The study reports a 12% improvement",
            "modality": "factual",
        }],
        "citations": [{"id": "c1", "document_id": "doc_42"}],
    }
    if cited:
        data["claims"][0]["citation_ids"] = ["c1"]
    return data


def citation_pack():
    core = [
        policy(
            "policy.citation.factual_claims_cited", "T2",
            {"kind": "claim", "filter": {"modality": "factual"}},
            ["count(claim.citation_ids) > 0"],
            action="CORRECT", hint="Attach a citation",
            template="[citation needed: {text}]",
        ),
        policy(
            "policy.citation.documents_named", "T1",
            {"kind": "citation"},
            ["citation.document_id != ''"],
        ),
        policy(
            "policy.citation.citations_present", "T3",
            {"kind": "output"},
            ["count(claims) == 0 or count(citations) > 0"],
            where=["count(filter(claims, it.modality == 'factual')) > 0"],
        ),
    ]
    extended = [
        policy(
            "policy.citation.hedged_not_cited", "T3",
            {"kind": "claim", "filter": {"modality": "hedged"}},
            ["count(claim.citation_ids) == 0"],
        ),
    ]
    cases = [
        case("cite_case_clean", "Summarize the study.", cite_graph(cited=True)),
        case("cite_case_uncited", "Summarize the study.", cite_graph(cited=False)),
    ]
    return write_pack("citation", "1.0.0", core, extended, cases)


def support_graph(first_modality, closing_text, entity_type=None):
    data = {
        "schema_version": "1.0.0",
        "claims": [
            {"text": "I understand the charge looks wrong", "modality": first_modality},
            {"text": closing_text, "modality": "instruction"},
        ],
    }
    if entity_type:
        data["entities"] = [{"text": "123-45-6789", "entity_type": entity_type}]
    return data


def customer_support_pack():
    core = [
        policy(
            "policy.support.acknowledge_first", "T3",
            {"kind": "output"},
            ["first(claims).modality != 'instruction'"],
            where=["count(claims) > 0"],
        ),
        policy(
            "policy.support.no_timeline_promises", "T2",
            {"kind": "claim"},
            ["not(matches(claim.text, '(within|by) [0-9]+ (hours|days)'))"],
        ),
        policy(
            "policy.support.no_ssn_exposure", "T2",
            {"kind": "entity"},
            ["entity.entity_type != 'ssn'"],
        ),
        policy(
            "policy.support.satisfaction_check", "T3",
            {"kind": "output"},
            ["contains(last(claims).text, '?')"],
            where=["count(claims) > 0"],
        ),
    ]
    extended = [
        policy(
            "policy.support.single_escalation", "T3",
            {"kind": "output"},
            ["count(filter(tool_calls, it.name == 'escalate')) <= 1"],
        ),
    ]
    cases = [
        case(
            "support_case_clean", "My bill is wrong.",
            support_graph("hedged", "Is there anything else I can check for you?"),
        ),
        case(
            "support_case_blunt", "My bill is wrong.",
            support_graph("instruction", "Restart the app."),
        ),
        case(
            "support_case_pii", "My bill is wrong.",
            support_graph("hedged", "Anything else?", entity_type="ssn"),
        ),
    ]
    return write_pack("customer-support", "1.0.0", core, extended, cases)


def main() -> None:
    roots = [tool_use_pack(), code_safety_pack(), citation_pack(), customer_support_pack()]
    for root in roots:
        pack = load_pack(root)
        graphs = {c.case_id: c.graph for c in pack.test_cases}
        profile = run_pack(pack, graphs)
        print(
            f"{pack.manifest.name}: core={len(pack.core_policies)} "
            f"extended={len(pack.extended_policies)} cases={len(pack.test_cases)} "
            f"core_adherence={profile.core_adherence} warnings={len(pack.lint_warnings)}"
        )


if __name__ == "__main__":
    main()
