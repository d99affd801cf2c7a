"""Violation correction with mandatory re-verification.

Three strategies: a deterministic patch when the expected value is known
(a top-level equality with one writable side), template insertion when an
element is missing and the policy carries a template, and a constrained
rewrite through an external provider for everything else. A correction is
never trusted: the result graph is always re-verified, and `accepted`
only goes true when the corrected policies come back clean and no new
T1/T2 violations appeared.

Originals are never mutated; every patch works on a copy.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass

from .cpl.ast import Binary, Call, Expr, Path
from .cpl.evaluator import EvalEnv, eval_expr
from .cpl.policy import Policy
from .errors import EvalError, PatchError, ProviderError, TemplateError
from .graph import (
    KIND_TO_COLLECTION,
    PredicateGraph,
    canonical_serialize,
    graph_from_data,
    graph_to_data,
    parse_graph,
)
from .values import canonical_json, render_value, values_equal
from .verifier import Verdict, Violation, evaluate_pack, resolve_order, verdict_to_data

DETERMINISTIC_PATCH = "deterministic"
TEMPLATE_INSERT = "template"
CONSTRAINED_REWRITE = "rewrite"

_STRATEGY_RANK = {DETERMINISTIC_PATCH: 0, TEMPLATE_INSERT: 1, CONSTRAINED_REWRITE: 2}


@dataclass(frozen=True)
class Patch:
    path: str
    old: object
    new: object
    policy_id: str
    strategy: str


@dataclass(frozen=True)
class CorrectionFailure:
    policy_id: str
    element_index: int
    reason: str


@dataclass(frozen=True)
class CorrectionResult:
    original_graph: PredicateGraph
    corrected_graph: PredicateGraph
    corrected_text: str | None
    strategy: str | None  # most invasive strategy used, None if untouched
    patches: tuple[Patch, ...]
    failures: tuple[CorrectionFailure, ...]
    reverify_verdict: Verdict
    accepted: bool
    text_edit_distance: int | None = None


def select_strategy(violation: Violation, policy: Policy, graph: PredicateGraph) -> str:
    """Strategy selection: deterministic iff the failed assert is a
    top-level == with exactly one side naming a concrete writable path in
    the scoped element and the other side evaluating to a constant;
    template iff the policy has a template and the assert is an existence
    check; otherwise rewrite."""
    if violation.assert_index >= len(policy.asserts):
        return CONSTRAINED_REWRITE
    if _deterministic_parts(violation, policy, graph) is not None:
        return DETERMINISTIC_PATCH
    expr = policy.asserts[violation.assert_index].expr
    if policy.on_violation.template is not None and _existence_target(expr) is not None:
        return TEMPLATE_INSERT
    return CONSTRAINED_REWRITE


def apply_deterministic(
    graph: PredicateGraph, violation: Violation, policy: Policy
) -> tuple[PredicateGraph, list[Patch]]:
    """Replace the value at the writable path with the expected constant.
    A stale violation (value already equal) records an identity patch and
    changes nothing; re-verification still runs."""
    parts = _deterministic_parts(violation, policy, graph)
    if parts is None:
        raise PatchError(f"{policy.id}: assert {violation.assert_index} is not deterministically patchable")
    bound_path, expected = parts

    data = graph_to_data(graph)
    collection = KIND_TO_COLLECTION[policy.scope.kind]
    pointer = f"/{collection}/{violation.element_index}" + "".join(f"/{m}" for m in bound_path.members)
    elements = data.get(collection, [])
    if violation.element_index >= len(elements):
        raise PatchError(f"{pointer}: element no longer exists")
    target = elements[violation.element_index]
    *parents, leaf = bound_path.members
    for member in parents:
        if not isinstance(target, dict) or member not in target:
            raise PatchError(f"{pointer}: path became unwritable")
        target = target[member]
    if not isinstance(target, dict) or leaf not in target:
        raise PatchError(f"{pointer}: path became unwritable")

    old = target[leaf]
    patch = Patch(path=pointer, old=old, new=expected, policy_id=policy.id, strategy=DETERMINISTIC_PATCH)
    if values_equal(old, expected):
        return graph, [patch]

    target[leaf] = expected
    if violation.span is not None and data.get("source_text") is not None:
        _rewrite_span(data, violation.span.start, violation.span.end, render_value(expected))
    return graph_from_data(data), [patch]


def apply_template(
    graph: PredicateGraph, violation: Violation, policy: Policy
) -> tuple[PredicateGraph, list[Patch]]:
    """Instantiate the policy template from the scoped element's fields
    and insert the missing element.

    Supported existence targets: a claim's citation_ids (a citation is
    created and linked) and the citations collection. The instantiated
    text becomes the new citation's document_id.
    """
    template = policy.on_violation.template
    if template is None:
        raise TemplateError(f"{policy.id}: no template on policy")
    if violation.assert_index >= len(policy.asserts):
        raise TemplateError(f"{policy.id}: assert {violation.assert_index} does not exist")
    expr = policy.asserts[violation.assert_index].expr
    target = _existence_target(expr)
    if target is None:
        raise TemplateError(f"{policy.id}: assert {violation.assert_index} is not an existence check")

    data = graph_to_data(graph)
    collection = KIND_TO_COLLECTION.get(policy.scope.kind)
    element_data = None
    if collection is not None:
        elements = data.get(collection, [])
        if violation.element_index >= len(elements):
            return graph, []  # stale: scoped element is gone
        element_data = elements[violation.element_index]

    env = EvalEnv(
        graph=graph,
        binding_name=policy.scope.kind,
        binding_value=graph if policy.scope.kind == "output" else getattr(
            graph, collection)[violation.element_index],
    )
    try:
        if eval_expr(expr, env) is True:
            return graph, []  # stale: the element is no longer missing
    except EvalError:
        pass

    text = _instantiate(template, element_data or {})
    root, members = target
    patches: list[Patch] = []

    if members and members[-1] == "citation_ids":
        if element_data is None or root != policy.scope.kind:
            raise TemplateError(f"{policy.id}: citation_ids target must be on the scoped element")
        new_id = _append_citation(data, policy, text, patches)
        old_ids = list(element_data.get("citation_ids", []))
        element_data["citation_ids"] = old_ids + [new_id]
        patches.append(
            Patch(
                path=f"/{collection}/{violation.element_index}/citation_ids",
                old=old_ids,
                new=list(element_data["citation_ids"]),
                policy_id=policy.id,
                strategy=TEMPLATE_INSERT,
            )
        )
    elif root == "citations" and not members:
        _append_citation(data, policy, text, patches)
    else:
        raise TemplateError(f"{policy.id}: unsupported template target {'.'.join((root, *members))!r}")

    return graph_from_data(data), patches


def _append_citation(data: dict, policy: Policy, text: str, patches: list[Patch]) -> str:
    new_id = _fresh_citation_id(data)
    citation = {"id": new_id, "document_id": text}
    _append_to_source_text(data, citation, text)
    citations = data.setdefault("citations", [])
    citations.append(citation)
    patches.append(
        Patch(
            path=f"/citations/{len(citations) - 1}",
            old=None,
            new=dict(citation),
            policy_id=policy.id,
            strategy=TEMPLATE_INSERT,
        )
    )
    return new_id


def correct(
    graph: PredicateGraph,
    verdict: Verdict,
    policies: list[Policy],
    rewrite_provider=None,
    extractor=None,
    output_id: str | None = None,
    seed: int = 0,
) -> CorrectionResult:
    """Run the full correction pass for one output.

    Violations are processed in resolve_order. Deterministic and template
    patches apply directly to the graph; rewrite-class violations go to
    the rewrite provider (when given) and the candidate text is
    re-extracted and re-verified. Per-violation failures never abort the
    batch. The result always carries a fresh verdict computed after the
    last mutation.
    """
    by_id = {p.id: p for p in resolve_order(policies)}
    output_id = output_id if output_id is not None else verdict.output_id
    diagnostic_keys = {
        (v.policy_id, v.element_index, v.assert_index)
        for result in verdict.results
        for v in result.diagnostics
    }

    current = graph
    patches: list[Patch] = []
    failures: list[CorrectionFailure] = []
    rewrite_queue: list[tuple[Violation, Policy]] = []
    strategies_used: list[str] = []
    applied_paths: list[str] = []

    for violation in verdict.violations:
        policy = by_id.get(violation.policy_id)
        if policy is None:
            failures.append(CorrectionFailure(violation.policy_id, violation.element_index, "unknown policy"))
            continue
        action = policy.on_violation.action
        if action == "WARN":
            continue
        if action == "REJECT":
            failures.append(
                CorrectionFailure(violation.policy_id, violation.element_index, "policy action is REJECT")
            )
            continue
        if (violation.policy_id, violation.element_index, violation.assert_index) in diagnostic_keys or (
            not verdict.results and _is_diagnostic(violation)
        ):
            failures.append(
                CorrectionFailure(violation.policy_id, violation.element_index, "assert failed to evaluate")
            )
            continue

        strategy = select_strategy(violation, policy, current)
        if strategy == CONSTRAINED_REWRITE:
            rewrite_queue.append((violation, policy))
            continue
        try:
            if strategy == DETERMINISTIC_PATCH:
                candidate, new_patches = apply_deterministic(current, violation, policy)
            else:
                candidate, new_patches = apply_template(current, violation, policy)
        except (PatchError, TemplateError) as exc:
            failures.append(CorrectionFailure(violation.policy_id, violation.element_index, str(exc)))
            continue
        conflicting = [p for p in new_patches if _conflicts(p.path, applied_paths)]
        if conflicting:
            # Violations arrive in resolve_order, so the already-applied
            # patch came from the higher-ordered policy: it wins, the
            # loser is reported, never silently dropped.
            failures.append(
                CorrectionFailure(
                    violation.policy_id,
                    violation.element_index,
                    f"patch conflict at {conflicting[0].path} (higher-ordered policy already patched it)",
                )
            )
            continue
        current = candidate
        for p in new_patches:
            applied_paths.append(p.path)
            patches.append(p)
        if new_patches:
            strategies_used.append(strategy)

    corrected_text = current.source_text if graph.source_text is not None else None

    if rewrite_queue:
        if rewrite_provider is None:
            for violation, policy in rewrite_queue:
                failures.append(
                    CorrectionFailure(violation.policy_id, violation.element_index, "no rewrite provider")
                )
        else:
            current, corrected_text, rewrite_failures = _run_rewrite(
                current, rewrite_queue, rewrite_provider, extractor, seed
            )
            failures.extend(rewrite_failures)
            if not rewrite_failures:
                strategies_used.append(CONSTRAINED_REWRITE)

    reverify = evaluate_pack(policies, current, output_id)
    accepted = _accepted(verdict, reverify, by_id)

    distance = None
    if corrected_text is not None and graph.source_text is not None:
        distance = _edit_distance(graph.source_text, corrected_text)

    strategy = max(strategies_used, key=_STRATEGY_RANK.__getitem__) if strategies_used else None
    return CorrectionResult(
        original_graph=graph,
        corrected_graph=current,
        corrected_text=corrected_text,
        strategy=strategy,
        patches=tuple(patches),
        failures=tuple(failures),
        reverify_verdict=reverify,
        accepted=accepted,
        text_edit_distance=distance,
    )


def correction_result_to_data(result: CorrectionResult) -> dict:
    data = {
        "accepted": result.accepted,
        "strategy": result.strategy,
        "patches": [
            {"path": p.path, "old": p.old, "new": p.new, "policy_id": p.policy_id, "strategy": p.strategy}
            for p in result.patches
        ],
        "failures": [
            {"policy_id": f.policy_id, "element_index": f.element_index, "reason": f.reason}
            for f in result.failures
        ],
        "original_graph": graph_to_data(result.original_graph),
        "corrected_graph": graph_to_data(result.corrected_graph),
        "reverify_verdict": verdict_to_data(result.reverify_verdict),
    }
    if result.corrected_text is not None:
        data["corrected_text"] = result.corrected_text
    if result.text_edit_distance is not None:
        data["text_edit_distance"] = result.text_edit_distance
    return data


def serialize_correction_result(result: CorrectionResult) -> str:
    return canonical_json(correction_result_to_data(result))


# --- internals ---------------------------------------------------------------


def _is_diagnostic(violation: Violation) -> bool:
    return isinstance(violation.actual, str) and violation.actual.startswith("eval error:")


def _deterministic_parts(violation: Violation, policy: Policy, graph: PredicateGraph):
    """(writable path, expected constant) when the failed assert supports
    a deterministic patch, else None. The constant is re-evaluated
    against the current graph so chained patches see fresh values."""
    if violation.assert_index >= len(policy.asserts):
        return None
    expr = policy.asserts[violation.assert_index].expr
    if not (isinstance(expr, Binary) and expr.op == "=="):
        return None
    binding = policy.scope.kind
    if binding == "output":
        return None
    left_w = _writable_path(expr.left, binding)
    right_w = _writable_path(expr.right, binding)
    if (left_w is None) == (right_w is None):
        return None
    bound_path = left_w if left_w is not None else right_w
    free_side = expr.right if left_w is not None else expr.left
    if _mentions(free_side, binding):
        return None
    element = _element_at(graph, binding, violation.element_index)
    if element is None:
        return None
    env = EvalEnv(graph=graph, binding_name=binding, binding_value=element)
    try:
        expected = eval_expr(free_side, env)
    except EvalError:
        return None
    if not _plain_value(expected):
        return None
    return bound_path, expected


def _writable_path(expr: Expr, binding: str):
    if isinstance(expr, Path) and expr.root == binding and expr.members:
        return expr
    return None


def _mentions(expr: Expr, root: str) -> bool:
    if isinstance(expr, Path):
        return expr.root == root
    if isinstance(expr, Binary):
        return _mentions(expr.left, root) or _mentions(expr.right, root)
    if isinstance(expr, Call):
        return any(_mentions(a, root) for a in expr.args)
    if hasattr(expr, "operand"):
        return _mentions(expr.operand, root)
    return False


def _element_at(graph: PredicateGraph, kind: str, index: int):
    collection = getattr(graph, KIND_TO_COLLECTION[kind])
    if index >= len(collection):
        return None
    return collection[index]


def _plain_value(value) -> bool:
    if value is None or isinstance(value, (bool, str, int)) or hasattr(value, "denominator"):
        return True
    if isinstance(value, (list, tuple)):
        return all(_plain_value(v) for v in value)
    if isinstance(value, dict):
        return all(_plain_value(v) for v in value.values())
    return False


def _existence_target(expr: Expr):
    """An existence check is any(coll, pred) or a comparison with
    count(coll) on one side; returns the quantified path as (root,
    members)."""
    if isinstance(expr, Call) and expr.fn == "any" and not expr.members:
        return _path_parts(expr.args[0])
    if isinstance(expr, Binary) and expr.op in ("<", ">", "<=", ">=", "!=", "=="):
        for side in (expr.left, expr.right):
            if isinstance(side, Call) and side.fn == "count" and not side.members:
                return _path_parts(side.args[0])
    return None


def _path_parts(expr: Expr):
    if isinstance(expr, Path):
        return expr.root, expr.members
    if isinstance(expr, Call) and expr.fn == "filter":
        return _path_parts(expr.args[0])
    return None


def _instantiate(template: str, element_data: dict) -> str:
    """Fill {placeholders} from the scoped element's fields."""
    import re as _re

    def replace(match):
        name = match.group(1)
        if name not in element_data:
            raise TemplateError(f"unbound placeholder {name!r}")
        return render_value(element_data[name])

    return _re.sub(r"\{([A-Za-z_][A-Za-z0-9_]*)\}", replace, template)


def _fresh_citation_id(data: dict) -> str:
    existing = {c.get("id") for c in data.get("citations", [])}
    k = 0
    while f"auto_{k}" in existing:
        k += 1
    return f"auto_{k}"


def _append_to_source_text(data: dict, element_data: dict, text: str) -> None:
    source = data.get("source_text")
    if source is None:
        return
    start = len(source)
    data["source_text"] = source + text
    element_data["span"] = {"start": start, "end": start + len(text)}


def _rewrite_span(data: dict, start: int, end: int, replacement: str) -> None:
    source = data["source_text"]
    data["source_text"] = source[:start] + replacement + source[end:]
    delta = len(replacement) - (end - start)
    if delta == 0:
        return
    # Spans after the edit shift; the edited element's span tightens to
    # the replacement.
    for name in ("operations", "tool_calls", "claims", "entities", "citations", "code_blocks"):
        for element in data.get(name, []):
            span = element.get("span")
            if span is None:
                continue
            if span["start"] == start and span["end"] == end:
                span["end"] = start + len(replacement)
            elif span["start"] >= end:
                span["start"] += delta
                span["end"] += delta


def _conflicts(path: str, applied: list[str]) -> bool:
    for existing in applied:
        if path == existing or path.startswith(existing + "/") or existing.startswith(path + "/"):
            return True
    return False


def _run_rewrite(graph, queue, provider, extractor, seed):
    """One rewrite round: hand the current text and the rewrite-class
    violations to the provider, re-extract, keep the result only if it
    parses. The engine never trusts the candidate — re-verification
    happens in correct()."""
    current_text = graph.source_text if graph.source_text is not None else canonical_serialize(graph)
    violations_data = [
        {
            "policy_id": v.policy_id,
            "message": v.message,
            "element_index": v.element_index,
            "assert_index": v.assert_index,
        }
        for v, _ in queue
    ]
    hints = [p.on_violation.correction_hint for _, p in queue if p.on_violation.correction_hint]
    hint = "; ".join(hints) if hints else None
    failures = []
    try:
        candidate = provider(current_text, violations_data, hint, seed)
        if not isinstance(candidate, str):
            raise ProviderError("rewrite provider returned a non-string")
        if extractor is not None:
            document = extractor(candidate)
        else:
            document = candidate  # default: the candidate is a graph document
        new_graph = parse_graph(document) if isinstance(document, str) else document
        new_text = new_graph.source_text if new_graph.source_text is not None else (
            candidate if graph.source_text is not None else None
        )
        return new_graph, new_text, []
    except Exception as exc:  # provider and extraction failures are per-violation, never a crash
        for violation, _ in queue:
            failures.append(
                CorrectionFailure(violation.policy_id, violation.element_index, f"rewrite failed: {exc}")
            )
        text = graph.source_text
        return graph, text, failures


def _accepted(original: Verdict, reverify: Verdict, by_id: dict) -> bool:
    """accepted iff every non-WARN policy violated in the original
    verdict is now clean and the correction introduced no new T1/T2
    violations."""
    blocking_ids = set()
    for violation in original.violations:
        policy = by_id.get(violation.policy_id)
        if policy is None or policy.on_violation.action != "WARN":
            blocking_ids.add(violation.policy_id)

    original_keys = {(v.policy_id, v.element_index, v.assert_index) for v in original.violations}
    for violation in reverify.violations:
        if violation.policy_id in blocking_ids:
            return False
        key = (violation.policy_id, violation.element_index, violation.assert_index)
        if key not in original_keys and violation.tier in ("T1", "T2"):
            return False
    return True


def _edit_distance(a: str, b: str) -> int:
    """Opcode-weighted edit distance (insertions + deletions + the larger
    side of replacements); recorded for rewrites, never thresholded."""
    distance = 0
    for tag, i1, i2, j1, j2 in difflib.SequenceMatcher(a=a, b=b, autojunk=False).get_opcodes():
        if tag == "replace":
            distance += max(i2 - i1, j2 - j1)
        elif tag == "delete":
            distance += i2 - i1
        elif tag == "insert":
            distance += j2 - j1
    return distance
