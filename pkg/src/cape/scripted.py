"""Scripted providers and the synthetic corpus they serve.

Real generation, extraction, and fine-tuning are external; these
deterministic stand-ins make the loop testable end to end. The corpus
generator produces percentage-calculation outputs as graph documents and
injects violations at an exact rate: item i misbehaves iff
(3*i) mod 10 < 10*rate, which spreads errors across the dataset and
makes the rate exact whenever the dataset size is a multiple of ten.
Because each item's residue is fixed, a decaying rate can only shrink
the erring set — the improving model's violation rate is monotone
non-increasing across training rounds.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from .graph import canonical_serialize, graph_from_data, parse_graph
from .values import canonical_json, ensure_exact, loads_exact, render_number

INJECTION_KINDS = ("calc", "citation", "code")


@dataclass(frozen=True)
class CorpusItem:
    index: int
    item_id: str
    prompt: str
    clean_document: str
    bad_document: str
    injected: str  # which injection the bad document carries


def err_residue(index: int) -> int:
    return (3 * index) % 10


def should_err(index: int, rate: Fraction) -> bool:
    return err_residue(index) < 10 * rate


def make_corpus(size: int, seed: int = 0, kinds: tuple[str, ...] = INJECTION_KINDS) -> list[CorpusItem]:
    """Build `size` percentage-calculation cases. Every item gets both a
    clean and a violated document; which one the scripted model emits
    depends on its current error rate."""
    rng = random.Random(seed)
    items = []
    for index in range(size):
        percent = rng.randrange(5, 95)
        # Pick cents so the exact product has more than one decimal digit,
        # guaranteeing the rounded tool value differs from the true value.
        while True:
            cents = rng.randrange(101, 9999)
            amount = Fraction(cents, 100)
            product = amount * Fraction(percent, 100)
            rounded = Fraction(round(product * 10), 10)
            if rounded != product:
                break
        prompt = f"What is {percent}% of ${render_number(amount)}? [case {index}]"
        kind = kinds[index % len(kinds)]
        clean = _document(index, percent, amount, product, rounded, injected=None)
        bad = _document(index, percent, amount, product, rounded, injected=kind)
        items.append(
            CorpusItem(
                index=index,
                item_id=f"case_{index:05d}",
                prompt=prompt,
                clean_document=clean,
                bad_document=bad,
                injected=kind,
            )
        )
    return items


def _document(index, percent, amount, product, rounded, injected):
    claim_text = f"{percent} percent of ${render_number(amount)} is {render_number(product)}"
    tool_value = rounded if injected == "calc" else product
    citation_ids = [] if injected == "citation" else ["c1"]
    code = "result = base * rate" if injected != "code" else "result = eval(input())"
    data = {
        "schema_version": "1.0.0",
        "operations": [
            {
                "op_type": "MULTIPLY",
                "inputs": [amount, Fraction(percent, 100)],
                "output": product,
            }
        ],
        "tool_calls": [{"name": "calc", "arguments": {"value": tool_value}}],
        "claims": [{"text": claim_text, "modality": "factual", "citation_ids": citation_ids}],
        "citations": [{"id": "c1", "document_id": f"doc_{index:05d}"}],
        "code_blocks": [{"language_tag": "python", "content": code}],
    }
    if not citation_ids:
        del data["claims"][0]["citation_ids"]
    return canonical_serialize(graph_from_data(data))


def dataset_from_corpus(corpus: list[CorpusItem]) -> list[dict]:
    return [{"id": item.item_id, "prompt": item.prompt} for item in corpus]


class ScriptedModel:
    """Emits corpus documents; injects its item's violation while the
    item's residue falls under the current error rate. The error rate
    decays by `improve_factor` per training generation, read from the
    model handle ("g<n>")."""

    def __init__(self, corpus: list[CorpusItem], error_rate=Fraction(3, 10), improve_factor=Fraction(1)):
        self.by_prompt = {item.prompt: item for item in corpus}
        self.error_rate = Fraction(ensure_exact(error_rate))
        self.improve_factor = Fraction(ensure_exact(improve_factor))

    def rate_for(self, handle: str) -> Fraction:
        generation = generation_of(handle)
        return self.error_rate * self.improve_factor**generation

    def generate(self, prompt: str, handle: str = "g0", seed: int = 0) -> str:
        item = self.by_prompt.get(prompt)
        if item is None:
            raise ValueError(f"prompt not in corpus: {prompt!r}")
        if should_err(item.index, self.rate_for(handle)):
            return item.bad_document
        return item.clean_document


def generation_of(handle: str) -> int:
    if handle.startswith("g") and handle[1:].isdigit():
        return int(handle[1:])
    return 0


class IdentityExtractor:
    """The scripted model's outputs already are graph documents."""

    def extract(self, output_text: str, seed: int = 0) -> str:
        return output_text


class IdentityTrainer:
    """FineTune that changes nothing; the loop's bookkeeping still runs."""

    def train(self, examples, handle: str = "g0", seed: int = 0) -> str:
        return handle


class AdvancingTrainer:
    """Bumps the model generation each call so a decaying ScriptedModel
    actually improves."""

    def train(self, examples, handle: str = "g0", seed: int = 0) -> str:
        return f"g{generation_of(handle) + 1}"


class ScriptedRewriter:
    """Rewrites eval()-style calls out of code blocks; the output is a
    corrected graph document, so the default identity extraction applies."""

    def __call__(self, output_text: str, violations, hint, seed: int = 0) -> str:
        return self.rewrite(output_text, violations, hint, seed)

    def rewrite(self, output_text: str, violations, hint, seed: int = 0) -> str:
        data = loads_exact(output_text)
        for block in data.get("code_blocks", []):
            content = block.get("content", "")
            block["content"] = content.replace("eval(", "parse_literal(").replace("exec(", "run_safe(")
        source = data.get("source_text")
        if isinstance(source, str):
            data["source_text"] = source.replace("eval(", "parse_literal(").replace("exec(", "run_safe(")
        return canonical_serialize(parse_graph(canonical_json(data)))


class BrokenRewriter:
    """Always returns a candidate that still violates; for exercising the
    reject-on-reverify path."""

    def __call__(self, output_text: str, violations, hint, seed: int = 0) -> str:
        return output_text


class ScriptedMeta:
    """Meta-provider with a fixed support lookup by issue location."""

    def __init__(self, supports: dict[str, object], default=Fraction(0)):
        self.supports = {k: Fraction(ensure_exact(v)) for k, v in supports.items()}
        self.default = Fraction(ensure_exact(default))

    def __call__(self, output_text: str, issue) -> Fraction:
        return self.supports.get(issue.location, self.default)
