"""External component providers.

Models, extractors, trainers, rewriters, and meta-verifiers plug into
the engine either as in-process callables or as subprocess commands
speaking line-delimited JSON on stdin/stdout: one request object per
line, one response object per line, `{"error": ...}` for failures. All
providers receive a seed so runs are reproducible. The full message
catalog is documented in specs/provider-protocol.md.
"""

from __future__ import annotations

import json
import subprocess

from .errors import ProviderError
from .values import canonical_json, loads_exact


class SubprocessProvider:
    """A persistent subprocess reached over the ndjson protocol.

    One instance can serve several roles (generate/extract/train/rewrite/
    meta_assess); the loop wires the same command wherever the config
    names it.
    """

    def __init__(self, argv: list[str]):
        self.argv = list(argv)
        self._proc: subprocess.Popen | None = None

    def _process(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
            )
        return self._proc

    def request(self, payload: dict) -> dict:
        proc = self._process()
        try:
            proc.stdin.write(canonical_json(payload) + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise ProviderError(f"provider {self.argv[0]!r} pipe failure: {exc}") from None
        if not line:
            raise ProviderError(f"provider {self.argv[0]!r} closed its stream")
        try:
            response = loads_exact(line)
        except ValueError as exc:
            raise ProviderError(f"provider {self.argv[0]!r} sent invalid JSON: {exc}") from None
        if not isinstance(response, dict):
            raise ProviderError(f"provider {self.argv[0]!r} sent a non-object response")
        if "error" in response:
            raise ProviderError(f"provider {self.argv[0]!r} reported: {response['error']}")
        return response

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.wait(timeout=10)
        self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()

    # --- role adapters ------------------------------------------------------

    def generate(self, prompt: str, handle: str, seed: int) -> str:
        response = self.request({"kind": "generate", "prompt": prompt, "handle": handle, "seed": seed})
        return _field(response, "output", str)

    def extract(self, output_text: str, seed: int) -> str:
        response = self.request({"kind": "extract", "output": output_text, "seed": seed})
        document = response.get("document")
        if isinstance(document, dict):
            return canonical_json(document)
        if isinstance(document, str):
            return document
        raise ProviderError("extract response must carry a document")

    def train(self, examples: list[dict], handle: str, seed: int) -> str:
        response = self.request({"kind": "train", "examples": examples, "handle": handle, "seed": seed})
        return _field(response, "handle", str)

    def rewrite(self, output_text: str, violations: list[dict], hint, seed: int) -> str:
        response = self.request(
            {"kind": "rewrite", "output": output_text, "violations": violations, "hint": hint, "seed": seed}
        )
        return _field(response, "output", str)

    def meta_assess(self, output_text: str, issue) -> object:
        response = self.request(
            {
                "kind": "meta_assess",
                "output": output_text,
                "issue": {"location": issue.location, "description": issue.description},
            }
        )
        support = response.get("support")
        if support is None:
            raise ProviderError("meta_assess response must carry a support value")
        return support

    def analyze(self, output_text: str, rubric_id: str, seed: int = 0) -> dict:
        return self.request(
            {"kind": "analyze", "output": output_text, "rubric_id": rubric_id, "seed": seed}
        )


def _field(response: dict, name: str, type_):
    value = response.get(name)
    if not isinstance(value, type_):
        raise ProviderError(f"response field {name!r} missing or wrong type")
    return value


def serve(handler, stdin=None, stdout=None) -> None:
    """Run the provider side of the protocol: feed each request object to
    `handler`, write its response, report exceptions as error objects.
    Utility for writing providers in Python."""
    import sys

    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            response = handler(request)
        except Exception as exc:  # protocol errors go back as data
            response = {"error": str(exc)}
        stdout.write(canonical_json(response) + "\n")
        stdout.flush()
