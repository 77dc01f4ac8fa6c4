"""Genetic ideation with a scripted provider, then near-duplicate filtering.

The scripted provider replays canned fenced-YAML idea records, so this runs
offline. The dedup filter keeps first-seen ideas and drops anything whose
cosine similarity to a kept idea reaches the threshold.
"""

import tempfile
from pathlib import Path

from labloop.config import EngineConfig
from labloop.engine import Engine
from labloop.ideation import dedup_filter, select_batch
from labloop.providers import ScriptedProvider


def idea_record(name: str, gist: str) -> str:
    return f"""```yaml
name: {name}
short_description: {gist}
long_description: {gist} The study compares against a plain baseline agent.
hypothesis: {gist}
variables:
  independent: [agent variant]
  dependent: [task score]
  controls: [model, seed]
metric: mean task score
baselines: plain agent
pilot: three episodes
required_resources: [environment API]
```"""


GISTS = [
    "A graph memory raises partial task score in cooking tasks",
    "A graph memory raises the partial task score in cooking tasks",  # paraphrase
    "Confidence scores fail to predict state-prediction accuracy",
    "Action templates learned from replays transfer across kitchens",
    "A graph memory raises partial task score in cooking tasks",  # duplicate
]

scenario = {
    "rules": [
        {
            "run": "ideation*",
            "repeat": "cycle",
            "responses": [{"text": idea_record(f"idea-{i}", gist)} for i, gist in enumerate(GISTS)],
        }
    ]
}

root = Path(tempfile.mkdtemp(prefix="demo-ideation-"))
engine = Engine(EngineConfig(root=root), provider=ScriptedProvider(scenario))
for k in range(3):
    engine.ingest_paper_text(f"Paper {k}\nAgents and environments, variant {k}." + " text" * 20)
engine.corpus.ingest_codeblock(
    "---\nname: Agent\nsummary: Agent loop.\ncapabilities: agent loop\n---\npass\n"
)

ideas = engine.ideate(pairs=1, seed=0, per_pair=5)
print(f"generated {len(ideas)} ideas via operator {ideas[0].operator.value}")

kept, dropped = dedup_filter(ideas, threshold=0.92)
print(f"\ndedup at 0.92 kept {len(kept)}, dropped {len(dropped)}:")
for idea, nearest, similarity in dropped:
    print(f"  dropped {idea.name!r} (similarity {similarity:.3f} to kept {nearest.name!r})")

queue = select_batch(kept, "operator", per_stratum=2)
print(f"\ntriage queue ({len(queue)} ideas, round-robin across strata):")
for idea in queue:
    print(f"  [{idea.operator.value}] {idea.hypothesis}")

engine.close()
