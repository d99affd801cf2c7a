"""Regenerate the adherence fixture pack used by tests.

10 cases; exactly 7 satisfy all core policies (core adherence 0.70;
core-failing cases: 02, 05, 08). Hand-countable violation distribution:
  adherence.calc_matches   2  (case_02, case_05)
  adherence.factual_cited  2  (case_08 carries two uncited factual claims)
  adherence.single_claim   2  (case_03 and case_08 have two claims; extended,
                               never affects core — extended adherence 8/10)
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from cape.graph import graph_from_data  # noqa: E402
from cape.values import loads_exact  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

CORE = [
    {
        "id": "adherence.calc_matches",
        "tier": "T1",
        "scope": {"kind": "tool_call", "filter": {"name": "calc"}},
        "where": [{"expr": "count(operations) > 0"}],
        "assert": [{"expr": "tool_call.arguments.value == last(operations).output"}],
        "on_violation": {"action": "CORRECT", "correction_hint": "Update to exact value"},
    },
    {
        "id": "adherence.factual_cited",
        "tier": "T2",
        "scope": {"kind": "claim", "filter": {"modality": "factual"}},
        "assert": [{"expr": "count(claim.citation_ids) > 0"}],
        "on_violation": {
            "action": "CORRECT",
            "correction_hint": "Attach a citation",
            "template": "[citation needed: {text}]",
        },
    },
]

EXTENDED = [
    {
        "id": "adherence.single_claim",
        "tier": "T3",
        "scope": {"kind": "output"},
        "assert": [{"expr": "count(claims) <= 1"}],
        "on_violation": {"action": "WARN"},
    },
]


def graph(calc_ok=True, cited=True, claims=1):
    value = 7.095 if calc_ok else 7.1
    data = {
        "schema_version": "1.0.0",
        "operations": [{"op_type": "MULTIPLY", "inputs": [47.30, 0.15], "output": 7.095}],
        "tool_calls": [{"name": "calc", "arguments": {"value": value}}],
        "claims": [],
        "citations": [{"id": "c1", "document_id": "doc_1"}],
    }
    for i in range(claims):
        claim = {"text": f"claim {i}: the total is 7.095", "modality": "factual"}
        if cited:
            claim["citation_ids"] = ["c1"]
        data["claims"].append(claim)
    return data


def main() -> None:
    pack_dir = ROOT / "adherence_pack"
    outputs_dir = ROOT / "adherence_outputs"
    (pack_dir / "policies").mkdir(parents=True, exist_ok=True)
    (pack_dir / "test_cases").mkdir(parents=True, exist_ok=True)
    outputs_dir.mkdir(parents=True, exist_ok=True)

    manifest = {
        "name": "adherence-fixture",
        "version": "1.0.0",
        "core_pass_threshold": 0.6,
        "extended_pass_threshold": 0.5,
    }
    (pack_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    (pack_dir / "policies" / "core.json").write_text(json.dumps(CORE, indent=2) + "\n", encoding="utf-8")
    (pack_dir / "policies" / "extended.json").write_text(
        json.dumps(EXTENDED, indent=2) + "\n", encoding="utf-8"
    )

    for i in range(10):
        case_id = f"case_{i:02d}"
        calc_ok = i not in (2, 5)
        cited = i != 8
        claims = 2 if i in (3, 8) else 1
        g = graph(calc_ok=calc_ok, cited=cited, claims=claims)
        graph_from_data(loads_exact(json.dumps(g)))  # must validate
        case = {"id": case_id, "prompt": f"compute case {i}", "graph": g}
        (pack_dir / "test_cases" / f"{case_id}.json").write_text(
            json.dumps(case, indent=2) + "\n", encoding="utf-8"
        )
        (outputs_dir / f"{case_id}.json").write_text(json.dumps(g, indent=2) + "\n", encoding="utf-8")
    print("fixture pack written to", pack_dir)


if __name__ == "__main__":
    main()
