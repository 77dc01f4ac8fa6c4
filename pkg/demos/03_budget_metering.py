"""Exact cost metering and budget enforcement.

Money is integer micro-dollars throughout; a ledger total is always the
exact integer sum of its records. Budget checks deny a call only when it
would push a total strictly past its limit, and a denied call never writes
a usage record.
"""

from labloop.errors import BudgetExceededError
from labloop.gateway import (
    BudgetPolicy,
    Gateway,
    PricingTable,
    format_microdollars,
    usage_summary,
)
from labloop.providers import ScriptedProvider

# $0.15 / $0.60 per million tokens, expressed in micro-dollars per 1M.
pricing = PricingTable(input_price=150_000, output_price=600_000)

scenario = {
    "rules": [
        {"run": "demo", "responses": [{"text": "ok", "input_tokens": 1000, "output_tokens": 500}]}
    ]
}
gateway = Gateway(ScriptedProvider(scenario), {"small-model": pricing})
gateway.open_ledger("demo", BudgetPolicy())

text, usage = gateway.complete("demo", 1, "small-model", "What is 2+2?")
print(f"one call: 1000 in / 500 out tokens -> {usage.cost} micro-dollars "
      f"({format_microdollars(usage.cost)})")

# Per-iteration cap demo: $1 per debug iteration, $0.11 per call.
capped = Gateway(
    ScriptedProvider({"rules": [{"run": "capped", "responses": [{"text": "x", "input_tokens": 110_000, "output_tokens": 0}]}]}),
    {"m": PricingTable(1_000_000, 1_000_000)},
)
capped.open_ledger("capped", BudgetPolicy(llm_cost_limit_per_iteration=1_000_000))
landed = 0
try:
    while True:
        capped.complete("capped", 1, "m", "p")
        landed += 1
except BudgetExceededError as exc:
    print(f"\n{landed} calls of $0.11 landed (total "
          f"{format_microdollars(capped.ledger('capped').iteration_total(1))}), "
          f"then: denied on the {exc.limit!r} limit")

print(f"records written: {len(capped.ledger('capped').records)} (the denied call left no record)")

summary = usage_summary([gateway.ledger("demo"), capped.ledger("capped")])
print(f"\nusage summary over both runs: mean cost {summary['mean_cost_dollars']}, "
      f"mean calls {summary['mean_calls']:.1f}")
