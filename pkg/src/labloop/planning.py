"""Plan generation and validation.

A plan operationalizes one idea: eight fixed prose sections, the codeblock
subset the builder will need, and an ordered list of pilot tiers that the
generated program selects with its global PILOT_MODE variable. Plans are
stored as a sectioned text document plus a JSON metadata sidecar, and are
immutable once a run references them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

import yaml

from .corpus import LibrarySnapshot
from .errors import ConflictError, GenerationError, NotFoundError, ValidationError
from .gateway import ModelSession
from .ideation import HumanAnnotation, Idea, extract_fenced_block
from .prompts import PromptLibrary
from .store import Store, canonical_json, read_json, sha256_hex, write_json, atomic_write_text

TIER_ORDER = ("MINI_PILOT", "PILOT", "FULL_EXPERIMENT")

SECTION_HEADERS = {
    "modes_and_scope": "EXPERIMENT MODES AND SCOPE",
    "environment_setup": "ENVIRONMENT SETUP",
    "model_config": "LLM CONFIGURATION",
    "data_collection": "DATA COLLECTION PROCEDURE",
    "analysis": "DATA ANALYSIS",
    "logging_output": "LOGGING AND OUTPUT",
    "execution_flow": "EXECUTION FLOW",
    "success_criteria": "SUCCESS CRITERIA",
}

SECTION_KEYS = tuple(SECTION_HEADERS)


@dataclass(frozen=True)
class PilotTier:
    name: str
    scale_params: dict[str, float] = field(default_factory=dict)
    stop_after: bool = False

    def to_dict(self) -> dict:
        return {"name": self.name, "scale_params": self.scale_params, "stop_after": self.stop_after}

    @classmethod
    def from_dict(cls, data: dict) -> "PilotTier":
        return cls(
            name=data["name"],
            scale_params=dict(data.get("scale_params", {})),
            stop_after=bool(data.get("stop_after", False)),
        )


@dataclass(frozen=True)
class Plan:
    id: str
    idea_id: str
    operationalization: dict[str, str]
    codeblock_ids: tuple[str, ...]
    tiers: tuple[PilotTier, ...]
    conditioning_text: str = ""
    library_version: int = 0

    def section(self, key: str) -> str:
        return self.operationalization.get(key, "")

    def to_text(self) -> str:
        parts = []
        for key in SECTION_KEYS:
            parts.append(f"{SECTION_HEADERS[key]}:")
            parts.append(self.operationalization.get(key, "").rstrip())
            parts.append("")
        return "\n".join(parts).rstrip() + "\n"

    def to_meta(self) -> dict:
        return {
            "id": self.id,
            "idea_id": self.idea_id,
            "codeblock_ids": list(self.codeblock_ids),
            "tiers": [tier.to_dict() for tier in self.tiers],
            "conditioning_text": self.conditioning_text,
            "library_version": self.library_version,
        }


def plan_id_for(idea_id: str, operationalization: dict, codeblock_ids, tiers) -> str:
    basis = canonical_json(
        {
            "idea_id": idea_id,
            "operationalization": operationalization,
            "codeblock_ids": list(codeblock_ids),
            "tiers": [tier.to_dict() for tier in tiers],
        }
    )
    return sha256_hex(basis.encode("utf-8"))[:16]


def validate_plan(plan: Plan, library: LibrarySnapshot) -> list[str]:
    """Return every violated invariant; an empty report means acceptable."""
    violations: list[str] = []

    for key in SECTION_KEYS:
        if not plan.operationalization.get(key, "").strip():
            violations.append(f"missing section: {key}")
    unknown_sections = set(plan.operationalization) - set(SECTION_KEYS)
    if unknown_sections:
        violations.append(f"unknown sections: {sorted(unknown_sections)}")

    library_ids = library.ids()
    for block_id in plan.codeblock_ids:
        if block_id not in library_ids:
            violations.append(f"unknown codeblock id: {block_id}")

    if not plan.tiers:
        violations.append("tiers must be non-empty")
    else:
        names = [tier.name for tier in plan.tiers]
        if len(set(names)) != len(names):
            violations.append("tier names must be unique")
        if tuple(names) != TIER_ORDER[: len(names)]:
            violations.append(
                f"tier order: expected a prefix of {list(TIER_ORDER)}, got {names}"
            )
        for param in {key for tier in plan.tiers for key in tier.scale_params}:
            values = [tier.scale_params[param] for tier in plan.tiers if param in tier.scale_params]
            if any(later < earlier for earlier, later in zip(values, values[1:])):
                violations.append(f"scale param {param!r} must be non-decreasing across tiers")

    return violations


def parse_plan_record(raw_output: str, idea_id: str, conditioning_text: str, library_version: int) -> Plan:
    block = extract_fenced_block(raw_output)
    try:
        data = yaml.safe_load(block)
    except yaml.YAMLError as exc:
        raise ValidationError(f"plan record is not valid YAML: {exc}")
    if not isinstance(data, dict):
        raise ValidationError("plan record must be a mapping")
    operationalization = data.get("operationalization")
    if not isinstance(operationalization, dict):
        raise ValidationError("plan record missing operationalization mapping")
    operationalization = {key: str(value) for key, value in operationalization.items()}
    tiers = tuple(PilotTier.from_dict(entry) for entry in data.get("tiers") or [])
    codeblock_ids = tuple(str(b) for b in data.get("codeblock_ids") or [])
    return Plan(
        id=plan_id_for(idea_id, operationalization, codeblock_ids, tiers),
        idea_id=idea_id,
        operationalization=operationalization,
        codeblock_ids=codeblock_ids,
        tiers=tiers,
        conditioning_text=conditioning_text,
        library_version=library_version,
    )


def make_plan(
    idea: Idea,
    annotation: HumanAnnotation | None,
    library: LibrarySnapshot,
    session: ModelSession,
    prompts: PromptLibrary,
    target_model: str,
    retry_cap: int = 3,
) -> Plan:
    """Convert an idea plus expert comments into a validated plan."""
    if not library.blocks:
        raise ValidationError("codeblock library snapshot is empty")
    notes = annotation.notes if annotation else ""
    conditioning = annotation.conditioning_text if annotation else ""
    prompt = prompts.render(
        "planning",
        idea_record=yaml.safe_dump(idea.to_dict(), sort_keys=False),
        human_notes=notes or "(none)",
        conditioning_text=conditioning or "(none)",
        codeblock_summaries=library.summaries_text(),
        target_model=target_model,
    )
    last_error = ""
    raw = ""
    for _attempt in range(retry_cap):
        raw, _usage = session.complete(prompt)
        try:
            plan = parse_plan_record(raw, idea.id, conditioning, library.version)
        except ValidationError as exc:
            last_error = str(exc)
            continue
        violations = validate_plan(plan, library)
        if not violations:
            return plan
        last_error = "; ".join(violations)
    raise GenerationError(
        f"plan generation failed after {retry_cap} attempts: {last_error}", raw_output=raw
    )


_HEADER_LINE = re.compile(
    "^(" + "|".join(re.escape(header) for header in SECTION_HEADERS.values()) + "):\\s*$"
)


def parse_plan_text(text: str) -> dict[str, str]:
    """Parse the sectioned plan.txt format back into section keys."""
    by_header = {header: key for key, header in SECTION_HEADERS.items()}
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for line in text.splitlines():
        match = _HEADER_LINE.match(line.strip())
        if match:
            current = by_header[match.group(1)]
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    return {key: "\n".join(lines).strip() for key, lines in sections.items()}


class PlanStore:
    def __init__(self, store: Store):
        self.store = store
        self.store.ensure_layout()

    def save(self, plan: Plan) -> None:
        plan_dir = self.store.plans_dir / plan.id
        meta_path = plan_dir / "plan.meta.json"
        if meta_path.exists():
            existing = read_json(meta_path)
            if existing != plan.to_meta():
                raise ConflictError(f"plan {plan.id} already exists with different content")
            return
        plan_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_text(plan_dir / "plan.txt", plan.to_text())
        write_json(meta_path, plan.to_meta())

    def get(self, plan_id: str) -> Plan:
        plan_dir = self.store.plans_dir / plan_id
        meta_path = plan_dir / "plan.meta.json"
        if not meta_path.exists():
            raise NotFoundError(f"unknown plan: {plan_id}")
        meta = read_json(meta_path)
        text = (plan_dir / "plan.txt").read_text(encoding="utf-8")
        return Plan(
            id=meta["id"],
            idea_id=meta["idea_id"],
            operationalization=parse_plan_text(text),
            codeblock_ids=tuple(meta["codeblock_ids"]),
            tiers=tuple(PilotTier.from_dict(entry) for entry in meta["tiers"]),
            conditioning_text=meta.get("conditioning_text", ""),
            library_version=meta.get("library_version", 0),
        )

    def list_plan_ids(self) -> list[str]:
        if not self.store.plans_dir.exists():
            return []
        return sorted(
            p.name for p in self.store.plans_dir.iterdir() if (p / "plan.meta.json").exists()
        )


def tier_sequence(plan: Plan) -> Sequence[PilotTier]:
    return plan.tiers
