"""The training-loop harness: generate, extract, verify, correct,
re-verify, train — over pluggable providers.

The harness owns the bookkeeping, not the learning: an output joins the
training set directly when its verdict is clean, or as its corrected
form when correction is accepted after re-verification; everything else
is dropped with a reason. Per-item provider failures never abort an
epoch. Identical (config, providers, seed) produce byte-identical
reports and manifests.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from .correction import correct
from .cpl.policy import Policy
from .errors import ConfigError, EmptyInputError
from .graph import canonical_serialize, parse_graph
from .values import canonical_json
from .verifier import Verdict, evaluate_pack, resolve_order, serialize_verdict

PROVENANCE_DIRECT = "direct"
PROVENANCE_CORRECTED = "corrected"


@dataclass(frozen=True)
class LoopConfig:
    epochs: int
    policies: tuple[Policy, ...]
    dataset: tuple[dict, ...]  # {"id": ..., "prompt": ...} records
    seed: int = 0
    output_id_scheme: str = "{id}@e{epoch}"
    theta_meta: Fraction = Fraction(1, 2)
    initial_handle: str = "g0"
    jobs: int = 1


@dataclass(frozen=True)
class ProviderSet:
    model: object
    extractor: object
    trainer: object
    rewrite_provider: object = None
    meta: object = None


@dataclass(frozen=True)
class TrainingExample:
    item_id: str
    prompt: str
    output: str
    provenance: str  # direct | corrected
    verdict_digest: str


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    violation_rate: Fraction  # fraction of outputs violating before correction
    accepted_direct: int
    accepted_corrected: int
    dropped: int
    histogram: dict = field(default_factory=dict)  # policy_id -> violation count
    tiers: dict = field(default_factory=dict)  # tier -> violation count
    drop_reasons: dict = field(default_factory=dict)
    handle_after: str = ""


@dataclass(frozen=True)
class LoopReport:
    epochs: tuple[EpochStats, ...]
    training_set_size: int
    final_handle: str


def run_loop(config: LoopConfig, providers: ProviderSet) -> tuple[LoopReport, list[TrainingExample]]:
    if config.epochs < 1:
        raise ConfigError("epochs must be >= 1")
    if not config.dataset:
        raise ConfigError("dataset is empty")
    for i, item in enumerate(config.dataset):
        if not isinstance(item.get("id"), str) or not isinstance(item.get("prompt"), str):
            raise ConfigError(f"dataset record {i} needs string id and prompt")
    policies = resolve_order(list(config.policies))

    handle = config.initial_handle
    training_set: list[TrainingExample] = []
    epoch_stats: list[EpochStats] = []
    extraction_cache: dict[str, object] = {}

    for epoch in range(1, config.epochs + 1):
        outcomes = _run_epoch(config, providers, policies, handle, epoch, extraction_cache)

        violated = sum(1 for o in outcomes if o.violated_before)
        histogram: dict[str, int] = {}
        tiers: dict[str, int] = {"T1": 0, "T2": 0, "T3": 0}
        drop_reasons: dict[str, int] = {}
        direct = corrected = dropped = 0
        epoch_examples: list[TrainingExample] = []
        for outcome in outcomes:  # dataset order: append order is canonical
            for violation in outcome.pre_violations:
                histogram[violation.policy_id] = histogram.get(violation.policy_id, 0) + 1
                tiers[violation.tier] = tiers.get(violation.tier, 0) + 1
            if outcome.example is None:
                dropped += 1
                reason = outcome.drop_reason or "unknown"
                drop_reasons[reason] = drop_reasons.get(reason, 0) + 1
            elif outcome.example.provenance == PROVENANCE_DIRECT:
                direct += 1
                epoch_examples.append(outcome.example)
            else:
                corrected += 1
                epoch_examples.append(outcome.example)

        training_set.extend(epoch_examples)
        try:
            handle = providers.trainer.train(
                [_example_to_data(e) for e in training_set], handle=handle, seed=_mix(config.seed, epoch, -1)
            )
        except Exception as exc:
            raise ConfigError(f"trainer failed after epoch {epoch}: {exc}") from exc
        if not isinstance(handle, str):
            raise ConfigError("trainer must return a model handle string")

        epoch_stats.append(
            EpochStats(
                epoch=epoch,
                violation_rate=Fraction(violated, len(config.dataset)),
                accepted_direct=direct,
                accepted_corrected=corrected,
                dropped=dropped,
                histogram=histogram,
                tiers=tiers,
                drop_reasons=drop_reasons,
                handle_after=handle,
            )
        )

    report = LoopReport(
        epochs=tuple(epoch_stats),
        training_set_size=len(training_set),
        final_handle=handle,
    )
    return report, training_set


@dataclass(frozen=True)
class _ItemOutcome:
    violated_before: bool
    pre_violations: tuple
    example: TrainingExample | None
    drop_reason: str | None = None


def _run_epoch(config, providers, policies, handle, epoch, extraction_cache) -> list:
    items = list(enumerate(config.dataset))

    def process(indexed):
        index, item = indexed
        return _process_item(config, providers, policies, handle, epoch, index, item, extraction_cache)

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            return list(pool.map(process, items))
    return [process(entry) for entry in items]


def _process_item(config, providers, policies, handle, epoch, index, item, cache) -> _ItemOutcome:
    seed = _mix(config.seed, epoch, index)
    output_id = config.output_id_scheme.format(id=item["id"], epoch=epoch)
    try:
        output = providers.model.generate(item["prompt"], handle=handle, seed=seed)
        graph = _extract(providers, output, seed, cache)
    except Exception as exc:
        return _ItemOutcome(False, (), None, f"provider failure: {exc}")

    verdict = evaluate_pack(list(policies), graph, output_id)
    if not verdict.violations:
        return _ItemOutcome(
            False,
            (),
            TrainingExample(
                item_id=item["id"],
                prompt=item["prompt"],
                output=output,
                provenance=PROVENANCE_DIRECT,
                verdict_digest=_digest(verdict),
            ),
        )

    result = correct(
        graph,
        verdict,
        list(policies),
        rewrite_provider=_rewrite_callable(providers.rewrite_provider),
        extractor=_extractor_callable(providers, seed, cache),
        output_id=output_id,
        seed=seed,
    )
    if not result.accepted:
        reasons = sorted({f.reason for f in result.failures})
        return _ItemOutcome(
            True, verdict.violations, None, reasons[0] if reasons else "correction not accepted"
        )

    if result.corrected_text is not None:
        corrected_output = result.corrected_text
    else:
        corrected_output = canonical_serialize(result.corrected_graph)
    return _ItemOutcome(
        True,
        verdict.violations,
        TrainingExample(
            item_id=item["id"],
            prompt=item["prompt"],
            output=corrected_output,
            provenance=PROVENANCE_CORRECTED,
            verdict_digest=_digest(result.reverify_verdict),
        ),
    )


def _extract(providers, output: str, seed: int, cache: dict):
    key = hashlib.sha256(output.encode("utf-8")).hexdigest()
    graph = cache.get(key)
    if graph is None:
        document = providers.extractor.extract(output, seed=seed)
        graph = parse_graph(document)
        cache[key] = graph
    return graph


def _rewrite_callable(provider):
    if provider is None:
        return None
    if callable(provider) and not hasattr(provider, "rewrite"):
        return provider
    return lambda text, violations, hint, seed: provider.rewrite(text, violations, hint, seed=seed)


def _extractor_callable(providers, seed, cache):
    def extract(text: str):
        return _extract(providers, text, seed, cache)

    return extract


def _digest(verdict: Verdict) -> str:
    return hashlib.sha256(serialize_verdict(verdict).encode("utf-8")).hexdigest()


def _example_to_data(example: TrainingExample) -> dict:
    return {
        "id": example.item_id,
        "prompt": example.prompt,
        "output": example.output,
        "provenance": example.provenance,
        "verdict_digest": example.verdict_digest,
    }


def _mix(seed: int, epoch: int, index: int) -> int:
    return (seed * 1_000_003 + epoch * 8_191 + index * 131) & 0x7FFFFFFF


def report_to_data(report: LoopReport) -> dict:
    return {
        "epochs": [
            {
                "epoch": e.epoch,
                "violation_rate": e.violation_rate,
                "accepted_direct": e.accepted_direct,
                "accepted_corrected": e.accepted_corrected,
                "dropped": e.dropped,
                "histogram": e.histogram,
                "tiers": e.tiers,
                "drop_reasons": e.drop_reasons,
                "handle_after": e.handle_after,
            }
            for e in report.epochs
        ],
        "training_set_size": report.training_set_size,
        "final_handle": report.final_handle,
    }


def serialize_report(report: LoopReport) -> str:
    return canonical_json(report_to_data(report))


def manifest_lines(training_set: list[TrainingExample]) -> str:
    """Line-delimited JSON manifest of the training set."""
    return "".join(canonical_json(_example_to_data(e)) + "\n" for e in training_set)


def violation_stats(verdicts: list[Verdict]) -> dict:
    """Aggregate statistics over verdicts: the share of outputs with at
    least one violation, plus per-policy and per-tier breakdowns."""
    if not verdicts:
        raise EmptyInputError("no verdicts")
    violated = sum(1 for v in verdicts if v.violations)
    histogram: dict[str, int] = {}
    tiers = {"T1": 0, "T2": 0, "T3": 0}
    for verdict in verdicts:
        for violation in verdict.violations:
            histogram[violation.policy_id] = histogram.get(violation.policy_id, 0) + 1
            tiers[violation.tier] = tiers.get(violation.tier, 0) + 1
    return {
        "total": len(verdicts),
        "violated": violated,
        "violation_rate": Fraction(violated, len(verdicts)),
        "per_policy": histogram,
        "per_tier": tiers,
    }
