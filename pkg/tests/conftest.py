"""Shared fixtures: scripted scenarios, canned model replies, engine factory."""

from __future__ import annotations

import textwrap
from pathlib import Path

import pytest

from labloop.config import EngineConfig
from labloop.engine import Engine
from labloop.providers import ScriptedProvider


# -- canned model reply builders ------------------------------------------------


def idea_reply(name: str = "confidence-analysis", hypothesis: str | None = None) -> str:
    hypothesis = hypothesis or f"{name} improves over the baseline"
    return textwrap.dedent(
        f"""\
        Here is the idea.

        ```yaml
        name: {name}
        short_description: Test {name} in a small virtual environment.
        long_description: A study of {name}, measured against a standard baseline agent.
        hypothesis: {hypothesis}
        variables:
          independent: [agent variant]
          dependent: [task score]
          controls: [model, environment seed]
        metric: mean task score over episodes
        baselines: plain agent without the variant
        pilot: three episodes, ten steps each
        required_resources: [environment API, plotting, bootstrap statistics]
        ```
        """
    )


def plan_reply(codeblock_ids: list[str], tiers: list[dict] | None = None) -> str:
    tiers = tiers or [
        {"name": "MINI_PILOT", "scale_params": {"episodes": 3, "steps": 10}, "stop_after": False},
        {"name": "PILOT", "scale_params": {"episodes": 20, "steps": 25}, "stop_after": False},
        {
            "name": "FULL_EXPERIMENT",
            "scale_params": {"episodes": 200, "steps": 50},
            "stop_after": False,
        },
    ]
    tier_lines = []
    for tier in tiers:
        scale = ", ".join(f"{k}: {v}" for k, v in tier["scale_params"].items())
        tier_lines.append(
            f"  - name: {tier['name']}\n"
            f"    scale_params: {{{scale}}}\n"
            f"    stop_after: {str(tier.get('stop_after', False)).lower()}"
        )
    ids = ", ".join(codeblock_ids)
    return (
        "```yaml\n"
        "operationalization:\n"
        "  modes_and_scope: |\n"
        "    PILOT_MODE selects MINI_PILOT, PILOT, or FULL_EXPERIMENT scale.\n"
        "  environment_setup: |\n"
        "    Simple cooking environment, 3 rooms, no doors.\n"
        "  model_config: |\n"
        "    Use the configured experiment model for all calls.\n"
        "  data_collection: |\n"
        "    Record state, action, next state each step.\n"
        "  analysis: |\n"
        "    Correlate confidence with accuracy; bootstrap the difference.\n"
        "  logging_output: |\n"
        "    Log raw records and write plots to to_save/.\n"
        "  execution_flow: |\n"
        "    Run MINI_PILOT first, then escalate on success.\n"
        "  success_criteria: |\n"
        "    Clean execution and a meaningful correlation estimate.\n"
        f"codeblock_ids: [{ids}]\n"
        "tiers:\n" + "\n".join(tier_lines) + "\n"
        "```\n"
    )


def code_reply(code: str) -> str:
    return f"Here is the program.\n\n```python\n{code}\n```\n"


def reflection_reply(verdict: str, reason: str = "", patch: str = "tweak analysis") -> str:
    lines = [f"DECISION: {verdict}"]
    if reason:
        lines.append(f"REASON: {reason}")
    lines.append("FAITHFULNESS: matches the plan")
    lines.append(f"PATCH_INTENT: {patch}")
    return "\n".join(lines)


def report_reply(body: str = "Results: the variant wins.") -> str:
    return f"```\n{body}\n```"


def summary_reply(verdict: str, text: str = "Scores improved 0.18 vs 0.11.") -> str:
    return f"{text}\nVERDICT: {verdict}"


def interesting_reply(flag: str = "yes") -> str:
    return f"INTERESTING: {flag}\nClear positive effect."


PRINTING_PROGRAM = 'PILOT_MODE = "MINI_PILOT"\nprint("RESULT 42")\n'

RESULT_WRITING_PROGRAM = (
    'PILOT_MODE = "MINI_PILOT"\n'
    "import json, os\n"
    "json.dump({'score': 0.42, 'mode': PILOT_MODE}, open('results.json', 'w'))\n"
    "os.makedirs('to_save', exist_ok=True)\n"
    "open('to_save/metrics.txt', 'w').write('score=0.42')\n"
    "print('RESULT', PILOT_MODE)\n"
)


def full_pipeline_scenario(
    block_ids: list[str],
    verdict: str = "supports",
    interesting: str = "yes",
    program: str | None = None,
    tier_count: int = 3,
) -> dict:
    """Scenario driving ideate -> plan -> 3-tier run -> report -> meta.

    Builder runs succeed on the first reflection at every tier; the final
    tier's rule also serves the reporting-stage calls (report, summary,
    interesting flag), which reuse the run ledger at the last iteration.
    """
    program = program or RESULT_WRITING_PROGRAM
    tiers = [
        {"name": "MINI_PILOT", "scale_params": {"episodes": 3, "steps": 10}},
        {"name": "PILOT", "scale_params": {"episodes": 20, "steps": 25}},
        {"name": "FULL_EXPERIMENT", "scale_params": {"episodes": 200, "steps": 50}},
    ][:tier_count]
    rules = [
        rule(run="ideation*", responses=[response(idea_reply())]),
        rule(run="planning-*", responses=[response(plan_reply(block_ids, tiers))]),
        rule(run="meta-*", responses=[response("Attempts agree; trust but verify the metric.")]),
        rule(
            iteration=1,
            responses=[response(code_reply(program)), response(reflection_reply("success"))]
            + (
                [
                    response(report_reply("Full report over the artifacts.")),
                    response(summary_reply(verdict)),
                    response(interesting_reply(interesting)),
                ]
                if tier_count == 1
                else []
            ),
        ),
    ]
    for k in range(2, tier_count + 1):
        responses = [response(reflection_reply("success"))]
        if k == tier_count:
            responses += [
                response(report_reply("Full report over the artifacts.")),
                response(summary_reply(verdict)),
                response(interesting_reply(interesting)),
            ]
        rules.append(rule(iteration=k, responses=responses))
    return {"rules": rules}


def response(text: str, input_tokens: int = 50, output_tokens: int = 20, **extra) -> dict:
    return {"text": text, "input_tokens": input_tokens, "output_tokens": output_tokens, **extra}


def rule(run: str = "*", responses: list[dict] | None = None, iteration=None, repeat="last") -> dict:
    out = {"run": run, "responses": responses or [], "repeat": repeat}
    if iteration is not None:
        out["iteration"] = iteration
    return out


# -- corpus inputs -----------------------------------------------------------------


PAPER_A = "Agents in TextWorld\nA study of agents acting in text environments.\n" + "Body. " * 40
PAPER_B = "Knowledge Graph Memory\nGraph-augmented agents and their memory.\n" + "Body. " * 40

CODEBLOCK_AGENT = """---
name: ReAct agent
summary: Minimal reason-and-act agent loop against a text environment.
capabilities: agent loop, prompting
---
def agent_step(observation):
    return "look around"
"""

CODEBLOCK_PLOT = """---
name: Line plot
summary: Save a line plot of a metric across episodes.
capabilities: plotting
---
def plot(values, path):
    pass
"""


@pytest.fixture
def engine_factory(tmp_path):
    """Engines with a scripted provider; caller supplies the scenario dict."""
    created: list[Engine] = []

    def factory(scenario: dict, root: Path | None = None, **config_overrides) -> Engine:
        config = EngineConfig(root=root or tmp_path / "root", **config_overrides)
        engine = Engine(config, provider=ScriptedProvider(scenario))
        created.append(engine)
        return engine

    yield factory
    for engine in created:
        engine.close()


def seed_corpus(engine: Engine) -> tuple[list[str], list[str]]:
    """Two papers and two codeblocks; returns (paper ids, codeblock ids)."""
    p1 = engine.ingest_paper_text(PAPER_A)
    p2 = engine.ingest_paper_text(PAPER_B)
    b1 = engine.corpus.ingest_codeblock(CODEBLOCK_AGENT)
    b2 = engine.corpus.ingest_codeblock(CODEBLOCK_PLOT)
    return [p1.id, p2.id], [b1.id, b2.id]
