"""The whole loop offline: ideate, plan, build 5 attempts, meta-analyze.

Everything model-shaped comes from a scripted scenario, so the run is
deterministic and free. The generated "experiment" is a real program executed
in the sandbox; reflection approves each tier, and the meta-analysis
classifies the five attempts.
"""

import tempfile
from pathlib import Path

from labloop.config import EngineConfig
from labloop.engine import Engine
from labloop.gateway import BudgetPolicy, format_microdollars
from labloop.ideation import HumanAnnotation
from labloop.orchestrator.scheduler import JobSpec, Scheduler
from labloop.providers import ScriptedProvider

IDEA = """```yaml
name: template-agent
short_description: Learn action templates and reuse them.
long_description: Mine frequent action sequences and replay them in context.
hypothesis: Replayed templates raise the partial task score.
variables:
  independent: [agent variant]
  dependent: [task score]
  controls: [model, seed]
metric: mean partial task score
baselines: plain agent
pilot: three episodes of ten steps
required_resources: [environment API, plotting]
```"""

PROGRAM = (
    'PILOT_MODE = "MINI_PILOT"\n'
    "import json\n"
    "json.dump({'task_score': 0.42, 'mode': PILOT_MODE}, open('results.json', 'w'))\n"
    "print('RESULT', PILOT_MODE)\n"
)


def plan_record(block_id: str) -> str:
    return f"""```yaml
operationalization:
  modes_and_scope: |
    PILOT_MODE picks MINI_PILOT (3x10), PILOT (20x25), FULL_EXPERIMENT (200x50).
  environment_setup: |
    Simple cooking environment, three rooms.
  model_config: |
    All model calls go through the metering proxy.
  data_collection: |
    Record score per episode into results.json.
  analysis: |
    Compare mean scores; bootstrap the difference.
  logging_output: |
    Print RESULT lines; save plots under to_save/.
  execution_flow: |
    Run MINI_PILOT first; escalate on success.
  success_criteria: |
    Clean run and a non-zero score.
codeblock_ids: [{block_id}]
tiers:
  - name: MINI_PILOT
    scale_params: {{episodes: 3, steps: 10}}
  - name: PILOT
    scale_params: {{episodes: 20, steps: 25}}
  - name: FULL_EXPERIMENT
    scale_params: {{episodes: 200, steps: 50}}
```"""


def scenario(block_id: str) -> dict:
    fenced_program = f"```python\n{PROGRAM}\n```"
    report = "```\nTemplates beat the baseline 0.42 vs 0.31 on the pilot scale.\n```"
    reflect_ok = "DECISION: success\nFAITHFULNESS: matches plan\nPATCH_INTENT: none"
    return {
        "rules": [
            {"run": "ideation*", "responses": [{"text": IDEA}]},
            {"run": "planning-*", "responses": [{"text": plan_record(block_id)}]},
            {"run": "meta-*", "responses": [{"text": "All five attempts support the hypothesis."}]},
            {"iteration": 1, "responses": [{"text": fenced_program}, {"text": reflect_ok}]},
            {"iteration": 2, "responses": [{"text": reflect_ok}]},
            {
                "iteration": 3,
                "responses": [
                    {"text": reflect_ok},
                    {"text": report},
                    {"text": "Score 0.42 vs 0.31.\nVERDICT: supports"},
                    {"text": "INTERESTING: yes\nClear margin."},
                ],
            },
        ]
    }


root = Path(tempfile.mkdtemp(prefix="demo-pipeline-"))

# Seed the corpus first (no model needed), then reopen with the scenario.
seed = Engine(EngineConfig(root=root))
seed.ingest_paper_text("Action Templates\nTemplates from replays." + " body" * 20)
seed.ingest_paper_text("Partial Scores\nUse partial task scores." + " body" * 20)
block = seed.corpus.ingest_codeblock(
    "---\nname: Env API\nsummary: Start episodes, step, read scores.\ncapabilities: environment\n---\npass\n"
)
seed.close()

engine = Engine(
    EngineConfig(root=root), provider=ScriptedProvider(scenario(block.id))
)

idea = engine.ideate(pairs=1, seed=1)[0]
print(f"idea {idea.id}: {idea.hypothesis}")

engine.annotate(
    HumanAnnotation(
        idea_id=idea.id,
        rating="selected",
        notes="Use the partial task score, not completion.",
        conditioning_text="Prefer the inexpensive experiment model.",
    )
)
plan = engine.plan_idea(idea.id)
print(f"plan {plan.id} tiers {[t.name for t in plan.tiers]}")

scheduler = Scheduler(engine, concurrency_cap=2)
run_ids = scheduler.enqueue(JobSpec(plan_id=plan.id, attempts=5, policy=BudgetPolicy()))
scheduler.wait_all()
scheduler.shutdown()

print("\nruns:")
for run_id in run_ids:
    status = engine.run_status(run_id)
    print(
        f"  {run_id}: {status['outcome']['kind']} after {status['iteration']} iterations, "
        f"cost {format_microdollars(status['cost_microdollars'])}"
    )
    summary = engine.reports.load_summary(run_id)
    if summary:
        print(f"    verdict={summary.verdict} interesting={summary.interesting}")

meta = engine.meta_store.load(idea.id)
print(f"\nmeta-analysis: {meta.classification}")
print(f"narrative: {meta.narrative}")
print(f"\nartifacts live under {root}")
engine.close()
