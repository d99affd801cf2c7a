"""Policy packs and adherence profiles.

A pack directory bundles a manifest (name, version, pass thresholds),
required core policies, optional extended policies, and test cases:

    capability-pack/
      manifest.json
      policies/
        core.json
        extended.json
      test_cases/

Test cases carry recorded graphs (or output text for provider-driven
runs) so benchmark evaluation is deterministic and CI-friendly. Core
adherence is the share of test cases satisfying every core policy;
extended failures never touch it.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path as FsPath

from .cpl.policy import LintWarning, Policy, lint_policy, policy_from_data
from .errors import EngineError, MissingCaseError, PackError
from .graph import PredicateGraph, graph_from_data
from .values import canonical_json, loads_exact
from .verifier import evaluate_pack

MANIFEST = "manifest.json"
CORE = "policies/core.json"
EXTENDED = "policies/extended.json"
TEST_CASES = "test_cases"


@dataclass(frozen=True)
class PackManifest:
    name: str
    version: str
    core_pass_threshold: Fraction
    extended_pass_threshold: Fraction


@dataclass(frozen=True)
class TestCase:
    case_id: str
    prompt: str
    graph: PredicateGraph | None = None
    output_text: str | None = None


@dataclass(frozen=True)
class PolicyPack:
    manifest: PackManifest
    core_policies: tuple[Policy, ...]
    extended_policies: tuple[Policy, ...]
    test_cases: tuple[TestCase, ...]
    lint_warnings: tuple[tuple[str, LintWarning], ...] = ()


@dataclass(frozen=True)
class CaseResult:
    case_id: str
    core_ok: bool
    extended_ok: bool
    core_violations: int
    extended_violations: int


@dataclass(frozen=True)
class AdherenceProfile:
    pack_name: str
    pack_version: str
    core_adherence: Fraction
    extended_adherence: Fraction
    violation_distribution: dict
    case_results: tuple[CaseResult, ...]
    passed: bool


def load_pack(directory) -> PolicyPack:
    root = FsPath(directory)
    if not root.is_dir():
        raise PackError(str(root), "not a directory")
    manifest = _manifest(root)
    core = _policies(root, CORE, required=True)
    extended = _policies(root, EXTENDED, required=False)

    seen: set[str] = set()
    for policy in (*core, *extended):
        if policy.id in seen:
            raise PackError(str(root), f"duplicate policy id {policy.id!r} across core and extended")
        seen.add(policy.id)
    if not core:
        raise PackError(str(root / CORE), "at least one core policy required")

    warnings = []
    for policy in (*core, *extended):
        for warning in lint_policy(policy):
            warnings.append((policy.id, warning))

    cases = _test_cases(root)
    return PolicyPack(
        manifest=manifest,
        core_policies=tuple(core),
        extended_policies=tuple(extended),
        test_cases=tuple(cases),
        lint_warnings=tuple(warnings),
    )


def run_pack(pack: PolicyPack, graphs: dict) -> AdherenceProfile:
    """Evaluate every test case against the core and extended policy sets.
    `graphs` maps case id -> PredicateGraph and must cover all cases."""
    for case in pack.test_cases:
        if case.case_id not in graphs:
            raise MissingCaseError(case.case_id)

    distribution: dict[str, int] = {}
    results = []
    for case in sorted(pack.test_cases, key=lambda c: c.case_id):
        graph = graphs[case.case_id]
        core_verdict = evaluate_pack(list(pack.core_policies), graph, case.case_id)
        extended_verdict = evaluate_pack(list(pack.extended_policies), graph, case.case_id)
        for violation in (*core_verdict.violations, *extended_verdict.violations):
            distribution[violation.policy_id] = distribution.get(violation.policy_id, 0) + 1
        results.append(
            CaseResult(
                case_id=case.case_id,
                core_ok=not core_verdict.violations,
                extended_ok=not extended_verdict.violations,
                core_violations=len(core_verdict.violations),
                extended_violations=len(extended_verdict.violations),
            )
        )

    total = len(results)
    core_adherence = Fraction(sum(1 for r in results if r.core_ok), total)
    extended_adherence = Fraction(sum(1 for r in results if r.extended_ok), total)
    passed = (
        core_adherence >= pack.manifest.core_pass_threshold
        and extended_adherence >= pack.manifest.extended_pass_threshold
    )
    return AdherenceProfile(
        pack_name=pack.manifest.name,
        pack_version=pack.manifest.version,
        core_adherence=core_adherence,
        extended_adherence=extended_adherence,
        violation_distribution=distribution,
        case_results=tuple(results),
        passed=passed,
    )


def profile_to_data(profile: AdherenceProfile) -> dict:
    return {
        "pack_name": profile.pack_name,
        "pack_version": profile.pack_version,
        "core_adherence": profile.core_adherence,
        "extended_adherence": profile.extended_adherence,
        "violation_distribution": dict(profile.violation_distribution),
        "case_results": [
            {
                "case_id": r.case_id,
                "core_ok": r.core_ok,
                "extended_ok": r.extended_ok,
                "core_violations": r.core_violations,
                "extended_violations": r.extended_violations,
            }
            for r in profile.case_results
        ],
        "passed": profile.passed,
    }


def render_profile(profile: AdherenceProfile, format: str = "json") -> str:
    """json: canonical profile. text-table: the violation distribution as
    a fixed-width table, count descending, ties by policy id."""
    if format == "json":
        return canonical_json(profile_to_data(profile))
    if format not in ("table", "text-table"):
        raise ValueError(f"unknown format {format!r}")
    rows = sorted(profile.violation_distribution.items(), key=lambda kv: (-kv[1], kv[0]))
    id_width = max([len("policy_id"), *(len(pid) for pid, _ in rows)])
    lines = [f"{'policy_id'.ljust(id_width)}  violations"]
    for policy_id, count in rows:
        lines.append(f"{policy_id.ljust(id_width)}  {count}")
    return "\n".join(lines) + "\n"


# --- directory loading --------------------------------------------------------


def _manifest(root: FsPath) -> PackManifest:
    path = root / MANIFEST
    if not path.is_file():
        raise PackError(str(path), "missing manifest.json")
    data = _json_file(path)
    if not isinstance(data, dict):
        raise PackError(str(path), "manifest must be an object")
    name = data.get("name")
    version = data.get("version")
    if not isinstance(name, str) or not name:
        raise PackError(str(path), "manifest needs a name")
    if not isinstance(version, str) or not version:
        raise PackError(str(path), "manifest needs a version")
    return PackManifest(
        name=name,
        version=version,
        core_pass_threshold=_threshold(data, "core_pass_threshold", path),
        extended_pass_threshold=_threshold(data, "extended_pass_threshold", path),
    )


def _threshold(data: dict, key: str, path: FsPath) -> Fraction:
    raw = data.get(key)
    if isinstance(raw, bool) or not isinstance(raw, (int, Fraction)):
        raise PackError(str(path), f"{key} must be a number")
    value = Fraction(raw)
    if not 0 <= value <= 1:
        raise PackError(str(path), f"{key} out of [0,1]")
    return value


def _policies(root: FsPath, rel: str, required: bool) -> list[Policy]:
    path = root / rel
    if not path.is_file():
        if required:
            raise PackError(str(path), "missing")
        return []
    data = _json_file(path)
    if not isinstance(data, list):
        raise PackError(str(path), "expected a JSON array of policies")
    policies = []
    for i, entry in enumerate(data):
        try:
            policies.append(policy_from_data(entry))
        except EngineError as exc:
            raise PackError(str(path), f"policy {i}: {exc}") from None
    return policies


def _test_cases(root: FsPath) -> list[TestCase]:
    directory = root / TEST_CASES
    if not directory.is_dir():
        raise PackError(str(directory), "missing test_cases directory")
    cases = []
    seen: set[str] = set()
    for path in sorted(directory.glob("*.json")):
        data = _json_file(path)
        if not isinstance(data, dict):
            raise PackError(str(path), "test case must be an object")
        case_id = data.get("id")
        prompt = data.get("prompt")
        if not isinstance(case_id, str) or not case_id:
            raise PackError(str(path), "test case needs an id")
        if case_id in seen:
            raise PackError(str(path), f"duplicate test case id {case_id!r}")
        seen.add(case_id)
        if not isinstance(prompt, str):
            raise PackError(str(path), "test case needs a prompt")
        graph = None
        if "graph" in data:
            try:
                graph = graph_from_data(data["graph"])
            except EngineError as exc:
                raise PackError(str(path), f"bad recorded graph: {exc}") from None
        output_text = data.get("output_text")
        if output_text is not None and not isinstance(output_text, str):
            raise PackError(str(path), "output_text must be a string")
        if graph is None and output_text is None:
            raise PackError(str(path), "test case needs a recorded graph or output_text")
        cases.append(TestCase(case_id=case_id, prompt=prompt, graph=graph, output_text=output_text))
    if not cases:
        raise PackError(str(directory), "at least one test case required")
    return cases


def _json_file(path: FsPath):
    try:
        return loads_exact(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise PackError(str(path), f"invalid JSON: {exc}") from None
    except OSError as exc:
        raise PackError(str(path), str(exc)) from None
