"""Idea generation over paper pairs and the codeblock library.

One model call yields one slot-structured idea as a fenced YAML record;
malformed records are retried up to the configured cap. Near-duplicates are
filtered with cosine similarity over a self-contained term-frequency
vectorizer (pluggable). Human triage decisions attach to ideas as
annotations with an audit history.
"""

from __future__ import annotations

import math
import re
import time
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import yaml

from .corpus import LibrarySnapshot, PaperRecord
from .errors import GenerationError, NotFoundError, ValidationError
from .gateway import ModelSession
from .prompts import PromptLibrary
from .store import Store, append_log_record, canonical_json, read_json, sha256_hex, write_json

DEFAULT_DEDUP_THRESHOLD = 0.92

IDEA_SLOTS = (
    "name",
    "short_description",
    "long_description",
    "hypothesis",
    "variables",
    "metric",
    "baselines",
    "pilot",
    "required_resources",
)

ANNOTATION_RATINGS = ("selected", "rejected", "unreviewed", "potentially-feasible")


class GeneticOperator(str, Enum):
    """Idea-recombination modes: one crossover plus three mutation styles."""

    COMBINE = "Combine"
    EXTEND = "Extend"
    CHALLENGE_ASSUMPTION = "ChallengeAssumption"
    FILL_GAP = "FillGap"

    @property
    def instruction(self) -> str:
        return _OPERATOR_INSTRUCTIONS[self]


_OPERATOR_INSTRUCTIONS = {
    GeneticOperator.COMBINE: "Combine the core ideas of the two papers into one experiment.",
    GeneticOperator.EXTEND: "Extend one paper's idea a step further, informed by the other.",
    GeneticOperator.CHALLENGE_ASSUMPTION: "Challenge an assumption one of the papers relies on.",
    GeneticOperator.FILL_GAP: "Fill a gap both papers leave open.",
}


@dataclass(frozen=True)
class Idea:
    id: str
    name: str
    short_description: str
    long_description: str
    hypothesis: str
    variables: dict[str, list[str]]
    metric: str
    baselines: str
    pilot: str
    required_resources: tuple[str, ...]
    operator: GeneticOperator
    source_paper_ids: tuple[str, str]
    codeblock_context_version: int
    created_at: float

    def text_for_similarity(self) -> str:
        return " ".join(
            [self.name, self.short_description, self.long_description, self.hypothesis]
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "short_description": self.short_description,
            "long_description": self.long_description,
            "hypothesis": self.hypothesis,
            "variables": self.variables,
            "metric": self.metric,
            "baselines": self.baselines,
            "pilot": self.pilot,
            "required_resources": list(self.required_resources),
            "operator": self.operator.value,
            "source_paper_ids": list(self.source_paper_ids),
            "codeblock_context_version": self.codeblock_context_version,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Idea":
        return cls(
            id=data["id"],
            name=data["name"],
            short_description=data["short_description"],
            long_description=data["long_description"],
            hypothesis=data["hypothesis"],
            variables=data["variables"],
            metric=data["metric"],
            baselines=data["baselines"],
            pilot=data["pilot"],
            required_resources=tuple(data["required_resources"]),
            operator=GeneticOperator(data["operator"]),
            source_paper_ids=tuple(data["source_paper_ids"]),
            codeblock_context_version=data["codeblock_context_version"],
            created_at=data["created_at"],
        )


@dataclass(frozen=True)
class HumanAnnotation:
    idea_id: str
    rating: str
    notes: str = ""
    conditioning_text: str = ""

    def __post_init__(self) -> None:
        if self.rating not in ANNOTATION_RATINGS:
            raise ValidationError(
                f"rating must be one of {ANNOTATION_RATINGS}, got {self.rating!r}"
            )

    def to_dict(self) -> dict:
        return {
            "idea_id": self.idea_id,
            "rating": self.rating,
            "notes": self.notes,
            "conditioning_text": self.conditioning_text,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HumanAnnotation":
        return cls(
            idea_id=data["idea_id"],
            rating=data["rating"],
            notes=data.get("notes", ""),
            conditioning_text=data.get("conditioning_text", ""),
        )


# -- parsing -------------------------------------------------------------------

_FENCE = re.compile(r"```[a-zA-Z0-9_-]*\n(.*?)```", re.DOTALL)


def extract_fenced_block(text: str) -> str:
    match = _FENCE.search(text)
    if not match:
        raise ValidationError("no fenced block found in model output")
    block = match.group(1)
    return block[:-1] if block.endswith("\n") else block


def parse_idea_record(raw_output: str) -> dict:
    """Parse and slot-validate one fenced YAML idea record."""
    block = extract_fenced_block(raw_output)
    try:
        data = yaml.safe_load(block)
    except yaml.YAMLError as exc:
        raise ValidationError(f"idea record is not valid YAML: {exc}")
    if not isinstance(data, dict):
        raise ValidationError("idea record must be a mapping")
    violations = []
    for slot in IDEA_SLOTS:
        value = data.get(slot)
        if value is None or (isinstance(value, (str, list, dict)) and not value):
            violations.append(f"missing or empty slot: {slot}")
    if violations:
        raise ValidationError(
            "idea record failed slot validation: " + "; ".join(violations), violations
        )
    variables = data["variables"]
    if not isinstance(variables, dict):
        raise ValidationError("variables must be a mapping of independent/dependent/controls")
    for key in ("independent", "dependent", "controls"):
        if not variables.get(key):
            raise ValidationError(f"variables missing non-empty {key!r} list")
    return data


def _idea_id(record: dict, operator: GeneticOperator, paper_ids: Sequence[str], version: int) -> str:
    basis = canonical_json(
        {
            "record": {k: record[k] for k in IDEA_SLOTS},
            "operator": operator.value,
            "papers": sorted(paper_ids),
            "library_version": version,
        }
    )
    return sha256_hex(basis.encode("utf-8"))[:16]


def generate_ideas(
    paper_pair: tuple[PaperRecord, PaperRecord],
    library: LibrarySnapshot,
    operator: GeneticOperator,
    session: ModelSession,
    prompts: PromptLibrary,
    count: int = 1,
    retry_cap: int = 3,
) -> list[Idea]:
    """Generate ``count`` validated ideas for one paper pair and operator."""
    if count < 1:
        raise ValidationError("count must be >= 1")
    if not library.blocks:
        raise ValidationError("codeblock library snapshot is empty")
    paper_a, paper_b = paper_pair
    prompt = prompts.render(
        "ideation",
        operator_name=operator.value,
        operator_instruction=operator.instruction,
        paper_a_title=paper_a.title,
        paper_a_body=paper_a.body,
        paper_b_title=paper_b.title,
        paper_b_body=paper_b.body,
        codeblock_summaries=library.summaries_text(),
    )
    ideas: list[Idea] = []
    for _ in range(count):
        record = None
        last_error = ""
        raw = ""
        for _attempt in range(retry_cap):
            raw, _usage = session.complete(prompt)
            try:
                record = parse_idea_record(raw)
                break
            except ValidationError as exc:
                last_error = str(exc)
                record = None
        if record is None:
            raise GenerationError(
                f"idea generation failed after {retry_cap} attempts: {last_error}",
                raw_output=raw,
            )
        resources = record["required_resources"]
        if isinstance(resources, str):
            resources = [resources]
        ideas.append(
            Idea(
                id=_idea_id(record, operator, (paper_a.id, paper_b.id), library.version),
                name=str(record["name"]),
                short_description=str(record["short_description"]),
                long_description=str(record["long_description"]),
                hypothesis=str(record["hypothesis"]),
                variables={
                    key: [str(v) for v in record["variables"][key]]
                    for key in ("independent", "dependent", "controls")
                },
                metric=str(record["metric"]),
                baselines=str(record["baselines"]),
                pilot=str(record["pilot"]),
                required_resources=tuple(str(r) for r in resources),
                operator=operator,
                source_paper_ids=(paper_a.id, paper_b.id),
                codeblock_context_version=library.version,
                created_at=time.time(),
            )
        )
    return ideas


# -- similarity -----------------------------------------------------------------

_TOKEN = re.compile(r"[a-z0-9]+")


def term_frequency_vector(text: str) -> dict[str, float]:
    counts = Counter(_TOKEN.findall(text.lower()))
    return {term: float(count) for term, count in counts.items()}


def cosine_similarity(a: dict[str, float], b: dict[str, float]) -> float:
    if not a or not b:
        return 0.0
    if len(b) < len(a):
        a, b = b, a
    dot = sum(weight * b.get(term, 0.0) for term, weight in a.items())
    norm_a = math.sqrt(sum(w * w for w in a.values()))
    norm_b = math.sqrt(sum(w * w for w in b.values()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return dot / (norm_a * norm_b)


Vectorizer = Callable[[str], dict[str, float]]


def dedup_filter(
    ideas: Sequence[Idea],
    threshold: float = DEFAULT_DEDUP_THRESHOLD,
    vectorizer: Vectorizer = term_frequency_vector,
) -> tuple[list[Idea], list[tuple[Idea, Idea, float]]]:
    """Drop ideas whose similarity to an already-kept idea reaches the threshold.

    Returns (kept in first-seen order, dropped as (idea, nearest kept,
    similarity)).
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError("threshold must be in [0, 1]")
    kept: list[Idea] = []
    kept_vectors: list[dict[str, float]] = []
    dropped: list[tuple[Idea, Idea, float]] = []
    for idea in ideas:
        vector = vectorizer(idea.text_for_similarity())
        best_index = -1
        best_similarity = -1.0
        for index, kept_vector in enumerate(kept_vectors):
            similarity = cosine_similarity(vector, kept_vector)
            if similarity > best_similarity:
                best_similarity = similarity
                best_index = index
        if best_index >= 0 and best_similarity >= threshold:
            dropped.append((idea, kept[best_index], best_similarity))
        else:
            kept.append(idea)
            kept_vectors.append(vector)
    return kept, dropped


# -- triage -----------------------------------------------------------------------

def select_batch(
    ideas: Sequence[Idea], strata_key: str, per_stratum: int
) -> list[Idea]:
    """Round-robin interleave up to per_stratum ideas from each stratum."""
    if strata_key not in ("operator", "source-pair"):
        raise ValidationError("strata_key must be 'operator' or 'source-pair'")
    if per_stratum < 0:
        raise ValidationError("per_stratum must be >= 0")

    def key_of(idea: Idea):
        if strata_key == "operator":
            return idea.operator.value
        return tuple(sorted(idea.source_paper_ids))

    strata: dict = {}
    for idea in ideas:
        strata.setdefault(key_of(idea), []).append(idea)

    queue: list[Idea] = []
    for round_index in range(per_stratum):
        for members in strata.values():
            if round_index < len(members):
                queue.append(members[round_index])
    return queue


# -- persistence -------------------------------------------------------------------

class IdeaStore:
    """Append-only idea log plus one document per idea and annotation history."""

    def __init__(self, store: Store):
        self.store = store
        self.store.ensure_layout()

    @property
    def log_path(self):
        return self.store.ideas_dir / "ideas.log"

    def add(self, idea: Idea) -> None:
        doc_path = self.store.ideas_dir / f"{idea.id}.json"
        if doc_path.exists():
            return
        write_json(doc_path, idea.to_dict())
        append_log_record(self.log_path, {"event": "idea", "id": idea.id, "name": idea.name})

    def get(self, idea_id: str) -> Idea:
        path = self.store.ideas_dir / f"{idea_id}.json"
        if not path.exists():
            raise NotFoundError(f"unknown idea: {idea_id}")
        return Idea.from_dict(read_json(path))

    def list_ideas(self) -> list[Idea]:
        ideas = []
        for path in sorted(self.store.ideas_dir.glob("*.json")):
            ideas.append(Idea.from_dict(read_json(path)))
        ideas.sort(key=lambda idea: idea.created_at)
        return ideas

    def annotate(self, annotation: HumanAnnotation) -> Idea:
        """Attach or replace the annotation; prior versions stay in the history."""
        idea = self.get(annotation.idea_id)  # raises NotFoundError for unknown ids
        path = self.store.ideas_dir / "annotations" / f"{annotation.idea_id}.json"
        history: list[dict] = []
        if path.exists():
            existing = read_json(path)
            history = existing.get("history", [])
            history.append(existing["current"])
        write_json(path, {"current": annotation.to_dict(), "history": history})
        append_log_record(
            self.log_path,
            {"event": "annotation", "id": annotation.idea_id, "rating": annotation.rating},
        )
        return idea

    def annotation(self, idea_id: str) -> HumanAnnotation | None:
        path = self.store.ideas_dir / "annotations" / f"{idea_id}.json"
        if not path.exists():
            return None
        return HumanAnnotation.from_dict(read_json(path)["current"])

    def annotation_history(self, idea_id: str) -> list[HumanAnnotation]:
        path = self.store.ideas_dir / "annotations" / f"{idea_id}.json"
        if not path.exists():
            return []
        data = read_json(path)
        return [HumanAnnotation.from_dict(entry) for entry in data.get("history", [])] + [
            HumanAnnotation.from_dict(data["current"])
        ]
