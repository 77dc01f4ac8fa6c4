"""Model providers behind the gateway.

The gateway talks to one provider through a tiny interface: estimate the
token usage of a call before it happens (for budget projection), then
perform it. Two implementations:

* ScriptedProvider — fully offline. Responses come from a scenario file and
  are selected by (run id, iteration, call ordinal), with declared token
  counts, so every test and dry run is deterministic.
* HTTPProvider — speaks the de-facto chat-completion JSON shape against a
  configured endpoint; the credential comes from an environment variable
  named in the provider config.
"""

from __future__ import annotations

import fnmatch
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Protocol

import yaml

from .errors import TransportError


@dataclass(frozen=True)
class CompletionResult:
    text: str
    input_tokens: int
    output_tokens: int
    truncated: bool = False


@dataclass(frozen=True)
class CallContext:
    """Identity of one gateway call, used for scripted lookup."""

    run_id: str
    iteration_index: int
    ordinal: int


class ModelProvider(Protocol):
    name: str

    def estimate(
        self, ctx: CallContext, model: str, prompt: str, decoding: dict | None
    ) -> tuple[int, int]:
        """Projected (input_tokens, output_tokens) for budget checks."""
        ...

    def complete(
        self, ctx: CallContext, model: str, prompt: str, decoding: dict | None
    ) -> CompletionResult:
        ...


@dataclass(frozen=True)
class _ScriptedResponse:
    text: str
    input_tokens: int
    output_tokens: int
    truncated: bool = False
    projected_input_tokens: int | None = None
    projected_output_tokens: int | None = None

    @property
    def projection(self) -> tuple[int, int]:
        return (
            self.projected_input_tokens if self.projected_input_tokens is not None else self.input_tokens,
            self.projected_output_tokens if self.projected_output_tokens is not None else self.output_tokens,
        )


@dataclass(frozen=True)
class _ScriptedRule:
    run_pattern: str
    iteration: int | None  # None matches any iteration
    responses: tuple[_ScriptedResponse, ...]
    repeat: str  # "last" | "cycle" | "error"

    def matches(self, ctx: CallContext) -> bool:
        if not fnmatch.fnmatchcase(ctx.run_id, self.run_pattern):
            return False
        return self.iteration is None or self.iteration == ctx.iteration_index

    def pick(self, ordinal: int) -> _ScriptedResponse:
        if ordinal < len(self.responses):
            return self.responses[ordinal]
        if self.repeat == "last":
            return self.responses[-1]
        if self.repeat == "cycle":
            return self.responses[ordinal % len(self.responses)]
        raise TransportError(
            f"scripted rule exhausted at ordinal {ordinal} (repeat=error)", retryable=False
        )


class ScriptedProvider:
    """Deterministic provider replaying a scenario definition.

    Scenario structure (YAML or dict):

        defaults: {input_tokens: 50, output_tokens: 20}
        rules:
          - run: "run-*"          # fnmatch pattern, default "*"
            iteration: 2           # omit to match any iteration
            repeat: last           # last | cycle | error
            responses:
              - text: "..."
                input_tokens: 1000
                output_tokens: 500
                truncated: false

    The first rule matching (run, iteration) wins; its responses are indexed
    by the call ordinal within that (run, iteration).
    """

    name = "scripted"

    def __init__(self, scenario: dict[str, Any]):
        defaults = scenario.get("defaults") or {}
        self._default_in = int(defaults.get("input_tokens", 50))
        self._default_out = int(defaults.get("output_tokens", 20))
        self._rules = tuple(
            self._parse_rule(raw) for raw in (scenario.get("rules") or [])
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedProvider":
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        return cls(data)

    def _parse_rule(self, raw: dict[str, Any]) -> _ScriptedRule:
        responses = []
        for entry in raw.get("responses") or []:
            responses.append(
                _ScriptedResponse(
                    text=str(entry.get("text", "")),
                    input_tokens=int(entry.get("input_tokens", self._default_in)),
                    output_tokens=int(entry.get("output_tokens", self._default_out)),
                    truncated=bool(entry.get("truncated", False)),
                    projected_input_tokens=(
                        int(entry["projected_input_tokens"])
                        if "projected_input_tokens" in entry
                        else None
                    ),
                    projected_output_tokens=(
                        int(entry["projected_output_tokens"])
                        if "projected_output_tokens" in entry
                        else None
                    ),
                )
            )
        if not responses:
            raise ValueError("scripted rule has no responses")
        iteration = raw.get("iteration")
        return _ScriptedRule(
            run_pattern=str(raw.get("run", "*")),
            iteration=None if iteration in (None, "*") else int(iteration),
            responses=tuple(responses),
            repeat=str(raw.get("repeat", "last")),
        )

    def _lookup(self, ctx: CallContext) -> _ScriptedResponse:
        for rule in self._rules:
            if rule.matches(ctx):
                return rule.pick(ctx.ordinal)
        raise TransportError(
            f"no scripted response for run={ctx.run_id!r} iteration={ctx.iteration_index} "
            f"ordinal={ctx.ordinal}",
            retryable=False,
        )

    def estimate(self, ctx, model, prompt, decoding) -> tuple[int, int]:
        return self._lookup(ctx).projection

    def complete(self, ctx, model, prompt, decoding) -> CompletionResult:
        response = self._lookup(ctx)
        return CompletionResult(
            text=response.text,
            input_tokens=response.input_tokens,
            output_tokens=response.output_tokens,
            truncated=response.truncated,
        )


class NullProvider:
    """Placeholder for stages that make no model calls (ingest, review, status)."""

    name = "null"

    def estimate(self, ctx, model, prompt, decoding) -> tuple[int, int]:
        raise TransportError("no model provider configured", retryable=False)

    def complete(self, ctx, model, prompt, decoding) -> CompletionResult:
        raise TransportError("no model provider configured", retryable=False)


class HTTPProvider:
    """Chat-completion HTTP client for a configured provider endpoint."""

    name = "http"

    def __init__(
        self,
        endpoint: str,
        credential_env: str,
        worst_case_output_tokens: int = 8192,
        timeout: float = 120.0,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.credential_env = credential_env
        self.worst_case_output_tokens = worst_case_output_tokens
        self.timeout = timeout

    def _credential(self) -> str:
        value = os.environ.get(self.credential_env, "")
        if not value:
            raise TransportError(
                f"credential environment variable {self.credential_env} is not set",
                retryable=False,
            )
        return value

    def estimate(self, ctx, model, prompt, decoding) -> tuple[int, int]:
        # True usage is only known after the call; project a worst case.
        approx_input = max(1, len(prompt) // 4)
        max_out = self.worst_case_output_tokens
        if decoding and decoding.get("max_tokens"):
            max_out = int(decoding["max_tokens"])
        return approx_input, max_out

    def complete(self, ctx, model, prompt, decoding) -> CompletionResult:
        import httpx

        body: dict[str, Any] = {
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
        }
        if decoding:
            body.update(decoding)
        try:
            response = httpx.post(
                f"{self.endpoint}/v1/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {self._credential()}"},
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"provider transport failure: {exc}", retryable=True)
        if response.status_code >= 500:
            raise TransportError(f"provider error {response.status_code}", retryable=True)
        if response.status_code >= 400:
            raise TransportError(
                f"provider rejected request: {response.status_code} {response.text[:200]}",
                retryable=False,
            )
        data = response.json()
        choice = data["choices"][0]
        usage = data.get("usage", {})
        return CompletionResult(
            text=choice["message"]["content"],
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
            truncated=choice.get("finish_reason") == "length",
        )
