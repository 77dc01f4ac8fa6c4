"""Metering gateway: every model call is priced, ledgered, and budget-checked.

Money is integer micro-dollars end to end; totals are exact integer sums.
Budget comparison is deny-if-strictly-exceeds, so landing exactly on a limit
is allowed. A call is projected before it runs (scripted calls project their
declared counts exactly; HTTP calls project a worst-case output bound), so a
ledger can overshoot a limit by at most one in-flight call, after which the
zero-cost reservation check denies everything.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable

import yaml

from .errors import BudgetExceededError, ValidationError
from .providers import CallContext, CompletionResult, ModelProvider
from .store import Store, append_log_record

MICRODOLLARS_PER_DOLLAR = 1_000_000
TOKENS_PER_PRICE_UNIT = 1_000_000

LIMIT_TOTAL = "total"
LIMIT_PER_ITERATION = "per_iteration"

CALLER_PIPELINE = "pipeline"
CALLER_EXPERIMENT = "experiment-code"


@dataclass(frozen=True)
class PricingTable:
    """Prices in micro-dollars per 1e6 tokens ($0.15/1M tokens -> 150_000)."""

    input_price: int
    output_price: int

    def __post_init__(self) -> None:
        if self.input_price < 0 or self.output_price < 0:
            raise ValidationError("prices must be >= 0")


@dataclass(frozen=True)
class ProviderConfig:
    provider_name: str
    endpoint: str
    credential_env: str
    models: dict[str, PricingTable]

    @classmethod
    def from_file(cls, path: str | Path) -> "ProviderConfig":
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        models = {
            name: PricingTable(int(entry["input_price"]), int(entry["output_price"]))
            for name, entry in (data.get("models") or {}).items()
        }
        return cls(
            provider_name=data.get("provider_name", "unknown"),
            endpoint=data.get("endpoint", ""),
            credential_env=data.get("credential_env", "MODEL_API_KEY"),
            models=models,
        )


def call_cost(input_tokens: int, output_tokens: int, pricing: PricingTable) -> int:
    """Exact integer micro-dollar cost of one call (round half to even)."""
    if input_tokens < 0 or output_tokens < 0:
        raise ValidationError("token counts must be >= 0")
    numerator = input_tokens * pricing.input_price + output_tokens * pricing.output_price
    return round(Fraction(numerator, TOKENS_PER_PRICE_UNIT))


@dataclass(frozen=True)
class UsageRecord:
    call_id: str
    run_id: str
    iteration_index: int
    model: str
    input_tokens: int
    output_tokens: int
    cost: int
    timestamp: float
    caller: str
    truncated: bool = False

    def to_dict(self) -> dict:
        return {
            "call_id": self.call_id,
            "run_id": self.run_id,
            "iteration_index": self.iteration_index,
            "model": self.model,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "cost": self.cost,
            "timestamp": self.timestamp,
            "caller": self.caller,
            "truncated": self.truncated,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "UsageRecord":
        return cls(**data)


@dataclass
class CostLedger:
    run_id: str
    records: list[UsageRecord] = field(default_factory=list)
    total: int = 0
    per_iteration_totals: dict[int, int] = field(default_factory=dict)

    def append(self, record: UsageRecord) -> None:
        self.records.append(record)
        self.total += record.cost
        bucket = self.per_iteration_totals.get(record.iteration_index, 0)
        self.per_iteration_totals[record.iteration_index] = bucket + record.cost

    def iteration_total(self, iteration_index: int) -> int:
        return self.per_iteration_totals.get(iteration_index, 0)

    @classmethod
    def from_records(cls, run_id: str, records: Iterable[UsageRecord]) -> "CostLedger":
        ledger = cls(run_id=run_id)
        for record in records:
            ledger.append(record)
        return ledger


@dataclass(frozen=True)
class BudgetPolicy:
    """Enforced per-run limits; defaults: $10 total, $1 per debug iteration,
    25 debug iterations, 90 min per execution, 6 h per run."""

    total_cost_limit: int = 10_000_000
    llm_cost_limit_per_iteration: int = 1_000_000
    max_debug_iterations: int = 25
    execution_time_limit_per_iteration: float = 5400.0
    hard_time_limit: float = 21600.0

    def __post_init__(self) -> None:
        for name in (
            "total_cost_limit",
            "llm_cost_limit_per_iteration",
            "max_debug_iterations",
            "execution_time_limit_per_iteration",
            "hard_time_limit",
        ):
            if getattr(self, name) <= 0:
                raise ValidationError(f"budget limit {name} must be > 0")

    def to_dict(self) -> dict:
        return {
            "total_cost_limit": self.total_cost_limit,
            "llm_cost_limit_per_iteration": self.llm_cost_limit_per_iteration,
            "max_debug_iterations": self.max_debug_iterations,
            "execution_time_limit_per_iteration": self.execution_time_limit_per_iteration,
            "hard_time_limit": self.hard_time_limit,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BudgetPolicy":
        return cls(**data)


@dataclass(frozen=True)
class BudgetDecision:
    allowed: bool
    limit: str | None = None
    reason: str = ""


def check_budget(
    ledger: CostLedger,
    policy: BudgetPolicy,
    iteration_index: int,
    projected_cost: int,
) -> BudgetDecision:
    """Deny iff a projected call would push a total strictly past its limit."""
    if projected_cost < 0:
        raise ValidationError("projected_cost must be >= 0")
    if ledger.total + projected_cost > policy.total_cost_limit:
        return BudgetDecision(
            allowed=False,
            limit=LIMIT_TOTAL,
            reason=(
                f"total cost {ledger.total} + projected {projected_cost} exceeds "
                f"limit {policy.total_cost_limit}"
            ),
        )
    iteration_total = ledger.iteration_total(iteration_index)
    if iteration_total + projected_cost > policy.llm_cost_limit_per_iteration:
        return BudgetDecision(
            allowed=False,
            limit=LIMIT_PER_ITERATION,
            reason=(
                f"iteration {iteration_index} cost {iteration_total} + projected "
                f"{projected_cost} exceeds limit {policy.llm_cost_limit_per_iteration}"
            ),
        )
    return BudgetDecision(allowed=True)


class Gateway:
    """Provider-agnostic call gateway with per-run ledgers.

    Safe for concurrent calls across runs; calls within a run are serialized
    so ledger totals are exact and monotone. No usage record is ever written
    for a denied call.
    """

    def __init__(
        self,
        provider: ModelProvider,
        pricing: dict[str, PricingTable],
        store: Store | None = None,
    ):
        self.provider = provider
        self.pricing = dict(pricing)
        self.store = store
        self._ledgers: dict[str, CostLedger] = {}
        self._policies: dict[str, BudgetPolicy] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._ordinals: dict[tuple[str, int], int] = {}
        self._iterations: dict[str, int] = {}
        self._registry_lock = threading.Lock()

    # -- ledger lifecycle ---------------------------------------------------

    def open_ledger(self, run_id: str, policy: BudgetPolicy | None = None) -> CostLedger:
        with self._registry_lock:
            if run_id not in self._ledgers:
                self._ledgers[run_id] = CostLedger(run_id=run_id)
                self._locks[run_id] = threading.Lock()
                self._iterations[run_id] = 0
            if policy is not None:
                self._policies[run_id] = policy
            elif run_id not in self._policies:
                self._policies[run_id] = BudgetPolicy()
            return self._ledgers[run_id]

    def ledger(self, run_id: str) -> CostLedger:
        return self._ledgers[run_id]

    def policy(self, run_id: str) -> BudgetPolicy:
        return self._policies[run_id]

    def has_ledger(self, run_id: str) -> bool:
        return run_id in self._ledgers

    def set_iteration(self, run_id: str, iteration_index: int) -> None:
        self._iterations[run_id] = iteration_index

    def current_iteration(self, run_id: str) -> int:
        return self._iterations.get(run_id, 0)

    def _pricing_for(self, model: str) -> PricingTable:
        if model not in self.pricing:
            raise ValidationError(f"no pricing entry for model {model!r}")
        return self.pricing[model]

    # -- the metered call ----------------------------------------------------

    def complete(
        self,
        run_id: str,
        iteration_index: int,
        model: str,
        prompt: str,
        decoding: dict | None = None,
        caller: str = CALLER_PIPELINE,
    ) -> tuple[str, UsageRecord]:
        if run_id not in self._ledgers:
            raise ValidationError(f"no ledger open for run {run_id!r}")
        pricing = self._pricing_for(model)
        ledger = self._ledgers[run_id]
        policy = self._policies[run_id]
        lock = self._locks[run_id]

        with lock:
            # Zero-cost reservation first: a previously landed overshoot
            # blocks all further calls.
            reservation = check_budget(ledger, policy, iteration_index, 0)
            if not reservation.allowed:
                raise BudgetExceededError(reservation.limit, reservation.reason, run_id=run_id)

            ordinal = self._ordinals.get((run_id, iteration_index), 0)
            ctx = CallContext(run_id=run_id, iteration_index=iteration_index, ordinal=ordinal)

            est_in, est_out = self.provider.estimate(ctx, model, prompt, decoding)
            projected = call_cost(est_in, est_out, pricing)
            decision = check_budget(ledger, policy, iteration_index, projected)
            if not decision.allowed:
                raise BudgetExceededError(decision.limit, decision.reason, run_id=run_id)

            result: CompletionResult = self.provider.complete(ctx, model, prompt, decoding)
            self._ordinals[(run_id, iteration_index)] = ordinal + 1

            record = UsageRecord(
                call_id=f"{run_id}:{iteration_index}:{ordinal}",
                run_id=run_id,
                iteration_index=iteration_index,
                model=model,
                input_tokens=result.input_tokens,
                output_tokens=result.output_tokens,
                cost=call_cost(result.input_tokens, result.output_tokens, pricing),
                timestamp=time.time(),
                caller=caller,
                truncated=result.truncated,
            )
            ledger.append(record)
            if self.store is not None:
                append_log_record(self.store.ledger_path(run_id), record.to_dict())
            return result.text, record

    def session(
        self,
        run_id: str,
        model: str,
        iteration_index: int = 0,
        caller: str = CALLER_PIPELINE,
        policy: BudgetPolicy | None = None,
    ) -> "ModelSession":
        self.open_ledger(run_id, policy)
        return ModelSession(self, run_id, model, iteration_index, caller)


@dataclass
class ModelSession:
    """A gateway binding for one pipeline stage: fixed run, model, caller."""

    gateway: Gateway
    run_id: str
    model: str
    iteration_index: int = 0
    caller: str = CALLER_PIPELINE

    def complete(self, prompt: str, decoding: dict | None = None) -> tuple[str, UsageRecord]:
        return self.gateway.complete(
            self.run_id, self.iteration_index, self.model, prompt, decoding, caller=self.caller
        )

    def at_iteration(self, iteration_index: int) -> "ModelSession":
        return ModelSession(self.gateway, self.run_id, self.model, iteration_index, self.caller)


def usage_summary(ledgers: Iterable[CostLedger]) -> dict:
    """Aggregate statistics over terminal runs, exact rationals until display."""
    ledgers = list(ledgers)
    if not ledgers:
        return {}
    n = len(ledgers)
    total_cost = sum(ledger.total for ledger in ledgers)
    total_calls = sum(len(ledger.records) for ledger in ledgers)
    iteration_counts = [
        (max(ledger.per_iteration_totals) if ledger.per_iteration_totals else 0)
        for ledger in ledgers
    ]
    mean_cost = Fraction(total_cost, n)
    mean_iterations = Fraction(sum(iteration_counts), n)
    mean_calls = Fraction(total_calls, n)
    return {
        "runs": n,
        "total_cost_microdollars": total_cost,
        "mean_cost_microdollars": round(mean_cost),
        "mean_cost_dollars": format_microdollars(round(mean_cost)),
        "mean_iterations": float(mean_iterations),
        "mean_calls": float(mean_calls),
    }


def format_microdollars(micro: int) -> str:
    dollars = float(Fraction(micro, MICRODOLLARS_PER_DOLLAR))
    if micro != 0 and abs(dollars) < 0.01:
        return f"${dollars:.6f}".rstrip("0")
    return f"${dollars:.2f}"
