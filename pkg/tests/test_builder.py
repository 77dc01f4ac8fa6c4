"""Builder loop: tier escalation, outcome taxonomy, limit semantics."""

from __future__ import annotations

import pytest

from labloop.builder import (
    OUTCOME_CODE_TOO_LONG,
    OUTCOME_COMPLETED,
    OUTCOME_COST_LIMIT,
    OUTCOME_DEBUG_LIMIT,
    OUTCOME_HARD_TIME_LIMIT,
    RunTerminalState,
    classify_outcome,
    parse_reflection,
    run_experiment,
    switch_tier,
)
from labloop.errors import ValidationError
from labloop.gateway import BudgetPolicy
from labloop.planning import Plan, PilotTier

from conftest import (
    PRINTING_PROGRAM,
    code_reply,
    reflection_reply,
    response,
    rule,
    seed_corpus,
)

THREE_TIERS = (
    PilotTier("MINI_PILOT", {"episodes": 3}),
    PilotTier("PILOT", {"episodes": 20}),
    PilotTier("FULL_EXPERIMENT", {"episodes": 200}),
)

SECTIONS = {
    "modes_and_scope": "Tiers: MINI_PILOT, PILOT, FULL_EXPERIMENT.",
    "environment_setup": "None needed.",
    "model_config": "Experiment model via proxy.",
    "data_collection": "Print results.",
    "analysis": "Inspect stdout.",
    "logging_output": "stdout only.",
    "execution_flow": "Run MINI_PILOT first.",
    "success_criteria": "RESULT line printed.",
}


def make_plan(tiers=THREE_TIERS) -> Plan:
    return Plan(
        id="testplan12345678",
        idea_id="idea-x",
        operationalization=dict(SECTIONS),
        codeblock_ids=(),
        tiers=tuple(tiers),
    )


def lax_policy(**overrides) -> BudgetPolicy:
    base = dict(
        total_cost_limit=10**12,
        llm_cost_limit_per_iteration=10**12,
        max_debug_iterations=10,
        execution_time_limit_per_iteration=30.0,
        hard_time_limit=600.0,
    )
    base.update(overrides)
    return BudgetPolicy(**base)


def run_with(engine, scenario_plan=None, policy=None, attempt=1):
    plan = scenario_plan or make_plan()
    return run_experiment(
        plan,
        policy or lax_policy(),
        engine.gateway,
        engine.corpus.library_snapshot(),
        engine.store,
        engine.prompts,
        engine.config,
        attempt_index=attempt,
    )


# -- pure pieces -----------------------------------------------------------------


def test_switch_tier_rewrites_mode_line():
    code = 'import sys\nPILOT_MODE = "MINI_PILOT"\nprint(PILOT_MODE)\n'
    switched = switch_tier(code, "PILOT")
    assert 'PILOT_MODE = "PILOT"' in switched
    assert "MINI_PILOT" not in switched


def test_switch_tier_preserves_other_text():
    code = "x = 1\n"
    assert switch_tier(code, "PILOT") == code


def test_parse_reflection_tags():
    decision = parse_reflection(reflection_reply("success"))
    assert decision.verdict == "success"
    assert decision.faithfulness_notes == "matches the plan"


def test_parse_reflection_abort_needs_reason():
    with pytest.raises(ValidationError):
        parse_reflection("DECISION: abort")
    decision = parse_reflection(reflection_reply("abort", reason="impossible without external dataset"))
    assert decision.verdict == "abort"
    assert decision.reason == "impossible without external dataset"


def test_parse_reflection_missing_tag_rejected():
    with pytest.raises(ValidationError):
        parse_reflection("looks good to me")


def test_classify_precedence_hard_time_beats_everything():
    state = RunTerminalState(
        wall_elapsed=100.0,
        iterations_used=7,
        completed=True,
        code_too_long=True,
        total_budget_exceeded=True,
    )
    policy = lax_policy(hard_time_limit=50.0)
    assert classify_outcome(state, policy).kind == OUTCOME_HARD_TIME_LIMIT


def test_classify_precedence_cost_beats_code_too_long():
    state = RunTerminalState(
        wall_elapsed=1.0,
        iterations_used=2,
        completed=False,
        code_too_long=True,
        total_budget_exceeded=True,
    )
    assert classify_outcome(state, lax_policy()).kind == OUTCOME_COST_LIMIT


def test_classify_code_too_long():
    state = RunTerminalState(wall_elapsed=1.0, iterations_used=2, completed=False, code_too_long=True)
    assert classify_outcome(state, lax_policy()).kind == OUTCOME_CODE_TOO_LONG


def test_classify_debug_limit_at_max_without_success():
    state = RunTerminalState(wall_elapsed=1.0, iterations_used=10, completed=False, last_verdict="continue")
    assert classify_outcome(state, lax_policy(max_debug_iterations=10)).kind == OUTCOME_DEBUG_LIMIT


def test_classify_completed_at_max_iterations_stays_completed():
    state = RunTerminalState(wall_elapsed=1.0, iterations_used=10, completed=True, last_verdict="success")
    assert classify_outcome(state, lax_policy(max_debug_iterations=10)).kind == OUTCOME_COMPLETED


def test_classify_success_at_nonfinal_tier_with_exhausted_budget_is_debug_limit():
    state = RunTerminalState(wall_elapsed=1.0, iterations_used=10, completed=False, last_verdict="success")
    assert classify_outcome(state, lax_policy(max_debug_iterations=10)).kind == OUTCOME_DEBUG_LIMIT


def test_classify_totality_fallback():
    state = RunTerminalState(wall_elapsed=0.0, iterations_used=0, completed=False)
    assert classify_outcome(state, lax_policy()).kind == OUTCOME_DEBUG_LIMIT


# -- full loop through scripted scenarios ----------------------------------------------


def test_success_at_each_tier_completes_with_full_history(engine_factory):
    scenario = {
        "rules": [
            rule(
                iteration=1,
                responses=[response(code_reply(PRINTING_PROGRAM)), response(reflection_reply("success"))],
            ),
            rule(iteration=2, responses=[response(reflection_reply("success"))]),
            rule(iteration=3, responses=[response(reflection_reply("success"))]),
        ]
    }
    engine = engine_factory(scenario)
    seed_corpus(engine)
    run = run_with(engine)
    assert run.outcome.kind == OUTCOME_COMPLETED
    assert run.tier_history == ["MINI_PILOT", "PILOT", "FULL_EXPERIMENT"]
    assert len(run.iterations) == 3
    # tier escalation reused the program with the tier flag switched
    assert 'PILOT_MODE = "PILOT"' in run.iterations[1].code_version
    assert 'PILOT_MODE = "FULL_EXPERIMENT"' in run.iterations[2].code_version
    assert run.iterations[1].generation_call_ids == []  # no regeneration on escalate


def test_reflections_never_succeeding_hits_debug_limit_exactly(engine_factory):
    # Different program text each iteration so the no-progress guard stays out
    # of the way; the limit itself must stop the loop.
    rules = [
        rule(
            iteration=k,
            responses=[
                response(code_reply(f'PILOT_MODE = "MINI_PILOT"\nprint({k})\n')),
                response(reflection_reply("continue")),
            ],
        )
        for k in range(1, 5)
    ]
    engine = engine_factory({"rules": rules})
    seed_corpus(engine)
    run = run_with(engine, policy=lax_policy(max_debug_iterations=3))
    assert run.outcome.kind == OUTCOME_DEBUG_LIMIT
    assert len(run.iterations) == 3


def test_truncated_generation_is_code_too_long(engine_factory):
    scenario = {
        "rules": [rule(responses=[response("partial code...", truncated=True)])]
    }
    engine = engine_factory(scenario)
    seed_corpus(engine)
    run = run_with(engine)
    assert run.outcome.kind == OUTCOME_CODE_TOO_LONG


def test_total_cost_limit_reached_is_cost_limit_with_bounded_overshoot(engine_factory):
    # Generation costs $0.60 each (4M input tokens at $0.15/1M).
    rules = [
        rule(
            iteration=k,
            responses=[
                response(
                    code_reply(f'PILOT_MODE = "MINI_PILOT"\nprint({k})\n'),
                    input_tokens=4_000_000,
                    output_tokens=0,
                ),
                response(reflection_reply("continue"), input_tokens=100, output_tokens=10),
            ],
        )
        for k in range(1, 6)
    ]
    engine = engine_factory({"rules": rules})
    seed_corpus(engine)
    policy = lax_policy(total_cost_limit=1_000_000)
    run = run_with(engine, policy=policy)
    assert run.outcome.kind == OUTCOME_COST_LIMIT
    total = engine.gateway.ledger(run.id).total
    assert total <= policy.total_cost_limit + 600_000  # overshoot <= one in-flight call


def test_hard_time_limit_reached(engine_factory):
    sleeper = 'import time\nPILOT_MODE = "MINI_PILOT"\ntime.sleep(30)\n'
    scenario = {
        "rules": [
            rule(responses=[response(code_reply(sleeper)), response(reflection_reply("continue"))])
        ]
    }
    engine = engine_factory(scenario)
    seed_corpus(engine)
    policy = lax_policy(hard_time_limit=2.0, execution_time_limit_per_iteration=20.0)
    run = run_with(engine, policy=policy)
    assert run.outcome.kind == OUTCOME_HARD_TIME_LIMIT


def test_stop_after_tier_completes_early(engine_factory):
    tiers = (
        PilotTier("MINI_PILOT", {"episodes": 3}),
        PilotTier("PILOT", {"episodes": 20}, stop_after=True),
        PilotTier("FULL_EXPERIMENT", {"episodes": 200}),
    )
    scenario = {
        "rules": [
            rule(
                iteration=1,
                responses=[response(code_reply(PRINTING_PROGRAM)), response(reflection_reply("success"))],
            ),
            rule(iteration=2, responses=[response(reflection_reply("success"))]),
        ]
    }
    engine = engine_factory(scenario)
    seed_corpus(engine)
    run = run_with(engine, scenario_plan=make_plan(tiers))
    assert run.outcome.kind == OUTCOME_COMPLETED
    assert run.tier_history == ["MINI_PILOT", "PILOT"]


def test_abort_reflection_maps_to_debug_limit_with_reason(engine_factory):
    scenario = {
        "rules": [
            rule(
                responses=[
                    response(code_reply(PRINTING_PROGRAM)),
                    response(reflection_reply("abort", reason="impossible without external dataset")),
                ]
            )
        ]
    }
    engine = engine_factory(scenario)
    seed_corpus(engine)
    run = run_with(engine)
    assert run.outcome.kind == OUTCOME_DEBUG_LIMIT
    assert "impossible without external dataset" in run.outcome.detail


def test_malformed_reflection_degrades_to_continue_with_warning(engine_factory):
    rules = [
        rule(
            iteration=k,
            responses=[
                response(code_reply(f'PILOT_MODE = "MINI_PILOT"\nprint({k})\n')),
                response("no decision tags here"),
            ],
        )
        for k in range(1, 4)
    ]
    engine = engine_factory({"rules": rules})
    seed_corpus(engine)
    run = run_with(engine, policy=lax_policy(max_debug_iterations=2))
    assert run.outcome.kind == OUTCOME_DEBUG_LIMIT
    assert all("reflection degraded to continue" in it.warnings for it in run.iterations)
    assert all(it.reflection.verdict == "continue" for it in run.iterations)


def test_no_progress_abort_on_identical_code_and_errors(engine_factory):
    # Same program, same stderr, reflections continue forever: stops early.
    failing = 'PILOT_MODE = "MINI_PILOT"\nimport sys\nsys.stderr.write("boom\\n")\nsys.exit(1)\n'
    scenario = {
        "rules": [
            rule(responses=[response(code_reply(failing)), response(reflection_reply("continue"))])
        ]
    }
    engine = engine_factory(scenario)
    seed_corpus(engine)
    run = run_with(engine, policy=lax_policy(max_debug_iterations=10))
    assert run.outcome.kind == OUTCOME_DEBUG_LIMIT
    assert "no progress" in run.outcome.detail
    assert len(run.iterations) == 3  # the no-progress window


def test_per_iteration_denial_consumes_iteration_and_continues(engine_factory):
    rules = [
        rule(
            iteration=k,
            responses=[
                response(
                    code_reply(f'PILOT_MODE = "MINI_PILOT"\nprint({k})\n'),
                    input_tokens=4_000_000,  # $0.60 projected > $0.10 per-iteration cap
                )
            ],
        )
        for k in range(1, 4)
    ]
    engine = engine_factory({"rules": rules})
    seed_corpus(engine)
    policy = lax_policy(llm_cost_limit_per_iteration=100_000, max_debug_iterations=2)
    run = run_with(engine, policy=policy)
    assert run.outcome.kind == OUTCOME_DEBUG_LIMIT
    assert len(run.iterations) == 2
    assert all(any("denied" in w for w in it.warnings) for it in run.iterations)
    assert engine.gateway.ledger(run.id).records == []  # nothing ever landed


def test_second_iteration_prompt_contains_first_stderr_excerpt(engine_factory):
    failing = 'PILOT_MODE = "MINI_PILOT"\nimport sys\nsys.stderr.write("DISTINCT-STDERR-MARK\\n")\nsys.exit(2)\n'
    ok = 'PILOT_MODE = "MINI_PILOT"\nprint("fixed")\n'
    scenario = {
        "rules": [
            rule(
                iteration=1,
                responses=[response(code_reply(failing)), response(reflection_reply("continue"))],
            ),
            rule(
                iteration=2,
                responses=[response(code_reply(ok)), response(reflection_reply("continue"))],
            ),
        ]
    }
    engine = engine_factory(scenario)
    seed_corpus(engine)

    captured: list[str] = []
    original = engine.provider.complete

    def spying(ctx, model, prompt, decoding):
        captured.append(prompt)
        return original(ctx, model, prompt, decoding)

    engine.provider.complete = spying
    run_with(engine, policy=lax_policy(max_debug_iterations=2))
    generation_prompts = [p for p in captured if "Reply with exactly one fenced code block" in p]
    assert len(generation_prompts) == 2
    assert "DISTINCT-STDERR-MARK" not in generation_prompts[0]
    assert "DISTINCT-STDERR-MARK" in generation_prompts[1]
    # reflection prompts carry the iteration's usage statistics
    reflection_prompts = [p for p in captured if "DECISION: success | continue | abort" in p]
    assert reflection_prompts
    assert all("Model usage this iteration:" in p for p in reflection_prompts)


def test_run_artifacts_persisted_under_documented_layout(engine_factory):
    program = (
        'PILOT_MODE = "MINI_PILOT"\n'
        "import os\n"
        "open('results.json', 'w').write('{}')\n"
        "os.makedirs('to_save', exist_ok=True)\n"
        "open('to_save/fig.txt', 'w').write('fig')\n"
        "print('done')\n"
    )
    scenario = {
        "rules": [
            rule(responses=[response(code_reply(program)), response(reflection_reply("success"))])
        ]
    }
    engine = engine_factory(scenario)
    seed_corpus(engine)
    run = run_with(engine, scenario_plan=make_plan(THREE_TIERS[:1]))
    assert run.outcome.kind == OUTCOME_COMPLETED
    iter_dir = engine.store.iter_dir(run.id, 1)
    assert (iter_dir / "code").read_text().startswith("PILOT_MODE")
    assert (iter_dir / "stdout").read_bytes() == b"done\n"
    assert (iter_dir / "artifacts" / "results.json").exists()
    assert (iter_dir / "artifacts" / "to_save" / "fig.txt").exists()
    meta = engine.store.read_run_meta(run.id)
    assert meta["status"] == "terminal"
    assert meta["outcome"]["kind"] == OUTCOME_COMPLETED


def test_iterations_never_exceed_policy_cap_and_ledger_respects_overshoot(engine_factory):
    rules = [
        rule(
            iteration=k,
            responses=[
                response(code_reply(f'PILOT_MODE = "MINI_PILOT"\nprint({k})\n')),
                response(reflection_reply("continue")),
            ],
        )
        for k in range(1, 30)
    ]
    engine = engine_factory({"rules": rules})
    seed_corpus(engine)
    policy = lax_policy(max_debug_iterations=5)
    run = run_with(engine, policy=policy)
    assert len(run.iterations) <= policy.max_debug_iterations
    assert run.outcome.kind == OUTCOME_DEBUG_LIMIT
