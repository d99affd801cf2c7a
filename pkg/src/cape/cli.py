"""Command-line surface.

Exit codes: 0 all checks passed, 1 violations found (the run itself was
clean), 2 usage / IO / parse errors. Stdout carries exactly the
machine-readable payload; every diagnostic goes to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import loop as loop_mod
from . import scripted
from .correction import correct, serialize_correction_result
from .cpl.evaluator import EvalEnv, eval_expr
from .cpl.parser import parse_expr
from .cpl.policy import Policy, lint_policy, parse_policy
from .errors import ConfigError, EngineError, MissingCaseError
from .graph import KIND_TO_COLLECTION, PredicateGraph, canonical_serialize, parse_graph, plain_value
from .packs import load_pack, render_profile, run_pack
from .providers import SubprocessProvider
from .values import canonical_json, loads_exact
from .verifier import evaluate_pack, serialize_verdict

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_ERROR = 2

POLICY_PATH_ENV = "CAPE_POLICY_PATH"


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; pass both through
        return int(exc.code or 0)
    try:
        return args.func(args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # a crash must never look like a verdict
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cape", description="Capability verification engine.")
    parser.add_argument("--format", choices=("json", "table"), default="json")
    parser.add_argument("--quiet", action="store_true", help="suppress stdout payloads")
    parser.add_argument("--seed", type=int, default=None, help="seed threaded through to providers")
    parser.add_argument("--jobs", type=int, default=1, help="parallelism cap")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("validate-graph", help="parse and validate a PredicateGraph document")
    p.add_argument("graph", type=Path)
    p.set_defaults(func=cmd_validate_graph)

    p = commands.add_parser("check", help="evaluate policies against a graph, print the verdict")
    p.add_argument("graph", type=Path)
    _policy_args(p)
    p.add_argument("--output-id", default="output_0")
    p.add_argument("--details", action="store_true", help="include per-policy detail records")
    p.set_defaults(func=cmd_check)

    p = commands.add_parser("correct", help="correct violations and re-verify")
    p.add_argument("graph", type=Path)
    _policy_args(p)
    p.add_argument("--output-id", default="output_0")
    p.add_argument("--rewrite-provider", help="command for rewrite-class corrections", default=None)
    p.add_argument("--extractor", help="command re-extracting rewritten text", default=None)
    p.set_defaults(func=cmd_correct)

    pack = commands.add_parser("pack", help="policy-pack operations")
    pack_commands = pack.add_subparsers(dest="pack_command", required=True)
    p = pack_commands.add_parser("run", help="compute a pack's adherence profile")
    p.add_argument("pack_dir", type=Path)
    p.add_argument("--outputs", type=Path, required=True, help="directory of <case_id>.json graphs")
    p.set_defaults(func=cmd_pack_run)

    loop = commands.add_parser("loop", help="training-loop operations")
    loop_commands = loop.add_subparsers(dest="loop_command", required=True)
    p = loop_commands.add_parser("run", help="run the verify-correct-train loop from a config file")
    p.add_argument("config", type=Path)
    p.set_defaults(func=cmd_loop_run)

    p = commands.add_parser("expr", help="evaluate one expression")
    p.add_argument("expression")
    p.add_argument("--graph", type=Path, default=None)
    p.add_argument("--bind", default=None, metavar="KIND=INDEX", help="bind a scoped element")
    p.set_defaults(func=cmd_expr)

    return parser


def _policy_args(parser) -> None:
    parser.add_argument(
        "--policy",
        type=Path,
        action="append",
        default=None,
        help="policy file (repeatable); defaults to *.json under $CAPE_POLICY_PATH",
    )
    parser.add_argument("--pack", type=Path, default=None, help="take policies from a pack directory")


def _load_policies(args) -> list[Policy]:
    if args.pack is not None:
        pack = load_pack(args.pack)
        _warn_lint(pack.lint_warnings)
        return [*pack.core_policies, *pack.extended_policies]
    paths = args.policy
    if paths is None:
        env_dir = os.environ.get(POLICY_PATH_ENV)
        if not env_dir:
            return []
        paths = sorted(Path(env_dir).glob("*.json"))
    policies = []
    for path in paths:
        policy = parse_policy(Path(path).read_text(encoding="utf-8"))
        for warning in lint_policy(policy):
            print(f"lint: {policy.id}: {warning}", file=sys.stderr)
        policies.append(policy)
    return policies


def _warn_lint(warnings) -> None:
    for policy_id, warning in warnings:
        print(f"lint: {policy_id}: {warning}", file=sys.stderr)


def _emit(args, payload: str) -> None:
    if not args.quiet:
        print(payload)


def cmd_validate_graph(args) -> int:
    graph = parse_graph(args.graph.read_text(encoding="utf-8"))
    _emit(args, canonical_serialize(graph))
    return EXIT_OK


def cmd_check(args) -> int:
    graph = parse_graph(args.graph.read_text(encoding="utf-8"))
    policies = _load_policies(args)
    verdict = evaluate_pack(policies, graph, args.output_id)
    _emit(args, serialize_verdict(verdict, details=args.details))
    return EXIT_VIOLATIONS if verdict.violations else EXIT_OK


def cmd_correct(args) -> int:
    graph = parse_graph(args.graph.read_text(encoding="utf-8"))
    policies = _load_policies(args)
    verdict = evaluate_pack(policies, graph, args.output_id)

    rewrite = None
    if args.rewrite_provider:
        provider = SubprocessProvider(args.rewrite_provider.split())

        def rewrite(text, violations, hint, seed):
            return provider.rewrite(text, violations, hint, seed=seed)

    extractor = None
    if args.extractor:
        extractor_provider = SubprocessProvider(args.extractor.split())
        extract_seed = args.seed if args.seed is not None else 0

        def extractor(text):
            return extractor_provider.extract(text, seed=extract_seed)

    result = correct(
        graph,
        verdict,
        policies,
        rewrite_provider=rewrite,
        extractor=extractor,
        output_id=args.output_id,
        seed=args.seed if args.seed is not None else 0,
    )
    _emit(args, serialize_correction_result(result))
    return EXIT_OK if result.accepted else EXIT_VIOLATIONS


def cmd_pack_run(args) -> int:
    pack = load_pack(args.pack_dir)
    _warn_lint(pack.lint_warnings)
    graphs = {}
    for case in pack.test_cases:
        path = args.outputs / f"{case.case_id}.json"
        if not path.is_file():
            if case.graph is not None:
                graphs[case.case_id] = case.graph
                continue
            raise MissingCaseError(case.case_id)
        graphs[case.case_id] = parse_graph(path.read_text(encoding="utf-8"))
    profile = run_pack(pack, graphs)
    _emit(args, render_profile(profile, "table" if args.format == "table" else "json").rstrip("\n"))
    return EXIT_OK if profile.passed else EXIT_VIOLATIONS


def cmd_loop_run(args) -> int:
    raw = loads_exact(args.config.read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ConfigError("loop config must be an object")
    config, providers, manifest_out = _build_loop(raw, args)
    report, training_set = loop_mod.run_loop(config, providers)
    if manifest_out is not None:
        manifest_out.write_text(loop_mod.manifest_lines(training_set), encoding="utf-8")
    _emit(args, loop_mod.serialize_report(report))
    return EXIT_OK


def cmd_expr(args) -> int:
    expr = parse_expr(args.expression)
    if args.graph is not None:
        graph = parse_graph(args.graph.read_text(encoding="utf-8"))
    else:
        graph = PredicateGraph()
    binding_name = binding_value = None
    if args.bind:
        kind, _, index_text = args.bind.partition("=")
        if kind not in KIND_TO_COLLECTION or not index_text.isdigit():
            raise EngineError(f"--bind expects kind=index with kind one of {sorted(KIND_TO_COLLECTION)}")
        collection = getattr(graph, KIND_TO_COLLECTION[kind])
        index = int(index_text)
        if index >= len(collection):
            raise EngineError(f"--bind index {index} out of range for {kind}")
        binding_name, binding_value = kind, collection[index]
    value = eval_expr(expr, EvalEnv(graph=graph, binding_name=binding_name, binding_value=binding_value))
    _emit(args, canonical_json(plain_value(value)))
    return EXIT_OK


def _build_loop(raw: dict, args):
    epochs = raw.get("epochs")
    if not isinstance(epochs, int) or isinstance(epochs, bool):
        raise ConfigError("epochs must be an integer")

    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")

    base = Path(raw.get("base_dir", "."))

    policies: list[Policy] = []
    if "pack" in raw:
        pack = load_pack(base / raw["pack"])
        policies = [*pack.core_policies, *pack.extended_policies]
    for rel in raw.get("policies", []):
        policies.append(parse_policy((base / rel).read_text(encoding="utf-8")))

    corpus = None
    corpus_spec = raw.get("corpus")
    if corpus_spec is not None:
        corpus = scripted.make_corpus(
            size=corpus_spec.get("size", 100),
            seed=corpus_spec.get("seed", 0),
            kinds=tuple(corpus_spec.get("kinds", scripted.INJECTION_KINDS)),
        )

    if "dataset" in raw:
        records = []
        for line in (base / raw["dataset"]).read_text(encoding="utf-8").splitlines():
            if line.strip():
                records.append(loads_exact(line))
        dataset = tuple(records)
    elif corpus is not None:
        dataset = tuple(scripted.dataset_from_corpus(corpus))
    else:
        raise ConfigError("config needs a dataset path or a corpus spec")

    provider_spec = raw.get("providers", {})
    providers = loop_mod.ProviderSet(
        model=_provider(provider_spec.get("model"), "model", corpus),
        extractor=_provider(provider_spec.get("extractor", {"kind": "identity"}), "extractor", corpus),
        trainer=_provider(provider_spec.get("trainer", {"kind": "identity"}), "trainer", corpus),
        rewrite_provider=_optional_provider(provider_spec.get("rewrite"), corpus),
    )

    config = loop_mod.LoopConfig(
        epochs=epochs,
        policies=tuple(policies),
        dataset=dataset,
        seed=seed,
        output_id_scheme=raw.get("output_id_scheme", "{id}@e{epoch}"),
        jobs=args.jobs,
    )
    manifest_out = Path(raw["manifest_out"]) if "manifest_out" in raw else None
    return config, providers, manifest_out


def _provider(spec, role: str, corpus):
    if spec is None:
        raise ConfigError(f"missing {role} provider")
    kind = spec.get("kind")
    if kind == "command":
        return SubprocessProvider(spec["argv"])
    if kind == "scripted" and role == "model":
        if corpus is None:
            raise ConfigError("scripted model needs a corpus spec")
        return scripted.ScriptedModel(
            corpus,
            error_rate=Fraction(spec.get("error_rate", Fraction(3, 10))),
            improve_factor=Fraction(spec.get("improve_factor", 1)),
        )
    if kind == "identity" and role == "extractor":
        return scripted.IdentityExtractor()
    if kind == "identity" and role == "trainer":
        return scripted.IdentityTrainer()
    if kind == "advancing" and role == "trainer":
        return scripted.AdvancingTrainer()
    raise ConfigError(f"unknown {role} provider kind {kind!r}")


def _optional_provider(spec, corpus):
    if spec is None:
        return None
    kind = spec.get("kind")
    if kind == "command":
        provider = SubprocessProvider(spec["argv"])

        def rewrite(text, violations, hint, seed):
            return provider.rewrite(text, violations, hint, seed=seed)

        return rewrite
    if kind == "scripted":
        return scripted.ScriptedRewriter()
    raise ConfigError(f"unknown rewrite provider kind {kind!r}")
