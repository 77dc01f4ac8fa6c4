"""Cross-run meta-analysis and the discovery review gate.

The consistency classification over N attempts of one plan is rule-based
(never model-decided): Limited when at most 40% of attempts completed,
Consistent when at least 80% of all attempts share the same verdict,
otherwise Mixed. Fractions are exact rationals over the total attempt count.

The review gate binarizes external ratings (unsound -> 0 else 1; not novel
-> 0 else 1), requires a strict majority of reviewers on both axes, and
conjoins with the recorded internal (human veto) decision.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

from .errors import ValidationError
from .gateway import ModelSession
from .prompts import PromptLibrary
from .reporting import VERDICT_KINDS, ResultSummary
from .store import Store, read_json, write_json

CLASS_CONSISTENT = "Consistent"
CLASS_MIXED = "Mixed"
CLASS_LIMITED = "Limited"

_CONSISTENT_FRACTION = Fraction(4, 5)  # at least 80% of all attempts agree
_LIMITED_FRACTION = Fraction(2, 5)  # at most 40% of attempts completed


class Soundness(str, Enum):
    CLEARLY_SOUND = "clearly_sound"
    LIKELY_SOUND = "likely_sound"
    MINOR_CONCERNS = "minor_concerns"
    UNSOUND = "unsound"


class Novelty(str, Enum):
    HIGHLY_NOVEL = "highly_novel"
    INCREMENTAL_SIGNIFICANT = "incremental_significant"
    INCREMENTAL_MINOR = "incremental_minor"
    NOT_NOVEL = "not_novel"


@dataclass(frozen=True)
class ReviewRating:
    reviewer_id: str
    soundness: Soundness
    novelty: Novelty
    justification: str = ""

    def to_dict(self) -> dict:
        return {
            "reviewer_id": self.reviewer_id,
            "soundness": self.soundness.value,
            "novelty": self.novelty.value,
            "justification": self.justification,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReviewRating":
        return cls(
            reviewer_id=data["reviewer_id"],
            soundness=Soundness(data["soundness"]),
            novelty=Novelty(data["novelty"]),
            justification=data.get("justification", ""),
        )


@dataclass(frozen=True)
class GateDecision:
    discovery_id: str
    external_pass: bool
    internal_pass: bool

    @property
    def final(self) -> bool:
        return self.external_pass and self.internal_pass

    def to_dict(self) -> dict:
        return {
            "discovery_id": self.discovery_id,
            "external_pass": self.external_pass,
            "internal_pass": self.internal_pass,
            "final": self.final,
        }


@dataclass
class MetaAnalysisReport:
    idea_id: str
    plan_id: str
    attempt_summaries: list[tuple[str, str, str | None]]  # (run_id, outcome kind, verdict)
    classification: str
    narrative: str = ""
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "idea_id": self.idea_id,
            "plan_id": self.plan_id,
            "attempt_summaries": [
                {"run_id": r, "outcome": o, "verdict": v} for r, o, v in self.attempt_summaries
            ],
            "classification": self.classification,
            "narrative": self.narrative,
            "warnings": self.warnings,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetaAnalysisReport":
        return cls(
            idea_id=data["idea_id"],
            plan_id=data["plan_id"],
            attempt_summaries=[
                (entry["run_id"], entry["outcome"], entry.get("verdict"))
                for entry in data["attempt_summaries"]
            ],
            classification=data["classification"],
            narrative=data.get("narrative", ""),
            warnings=list(data.get("warnings", [])),
        )


def classify_consistency(attempts: Sequence[tuple[bool, str | None]]) -> str:
    """Classify N attempts given (completed, verdict-if-completed) per attempt.

    Rule order: Limited first, then Consistent, then Mixed. Both fractions
    use the total attempt count N as denominator; verdict agreement counts
    completed runs only.
    """
    n = len(attempts)
    if n < 1:
        raise ValidationError("classification needs at least one attempt")
    for completed, verdict in attempts:
        if completed and verdict not in VERDICT_KINDS:
            raise ValidationError(f"completed attempt carries invalid verdict {verdict!r}")

    completed_count = sum(1 for completed, _ in attempts if completed)
    if Fraction(completed_count, n) <= _LIMITED_FRACTION:
        return CLASS_LIMITED

    verdict_counts = Counter(
        verdict for completed, verdict in attempts if completed and verdict is not None
    )
    if verdict_counts:
        _modal_verdict, modal_count = verdict_counts.most_common(1)[0]
        if Fraction(modal_count, n) >= _CONSISTENT_FRACTION:
            return CLASS_CONSISTENT
    return CLASS_MIXED


def meta_report(
    idea_id: str,
    plan_id: str,
    attempts: Sequence[tuple[str, str, str | None]],
    summaries: Sequence[ResultSummary],
    session: ModelSession | None,
    prompts: PromptLibrary | None,
    idea_text: str = "",
    retry_cap: int = 3,
) -> MetaAnalysisReport:
    """Build the report: rule-based classification plus a model narrative.

    ``attempts`` is (run_id, outcome kind, verdict or None) per attempt, all
    terminal. A narrative failure leaves the classification intact.
    """
    classification = classify_consistency(
        [(outcome == "Completed", verdict) for _run, outcome, verdict in attempts]
    )
    report = MetaAnalysisReport(
        idea_id=idea_id,
        plan_id=plan_id,
        attempt_summaries=list(attempts),
        classification=classification,
    )
    if session is None or prompts is None:
        return report

    summary_lines = []
    for index, (run_id, outcome, verdict) in enumerate(attempts, start=1):
        text = next((s.text for s in summaries if s.run_id == run_id), "")
        summary_lines.append(
            f"{index}. run {run_id}: outcome={outcome}, verdict={verdict or 'n/a'}. {text}"
        )
    prompt = prompts.render(
        "metaanalysis",
        idea=idea_text or idea_id,
        classification=classification,
        summaries="\n".join(summary_lines),
    )
    try:
        for _attempt in range(retry_cap):
            raw, _usage = session.complete(prompt)
            if raw.strip():
                report.narrative = raw.strip()
                break
        else:
            report.warnings.append("narrative generation returned empty output")
    except Exception as exc:  # classification must survive narrative failures
        report.warnings.append(f"narrative generation failed: {exc}")
    return report


def binarize_rating(rating: ReviewRating) -> tuple[int, int]:
    """(soundness_bit, novelty_bit): only Unsound / NotNovel map to zero."""
    soundness_bit = 0 if rating.soundness is Soundness.UNSOUND else 1
    novelty_bit = 0 if rating.novelty is Novelty.NOT_NOVEL else 1
    return soundness_bit, novelty_bit


def external_gate(ratings: Sequence[ReviewRating]) -> bool:
    """Strict majority of reviewers must pass both axes; ties fail."""
    if not ratings:
        raise ValidationError("external gate needs at least one rating")
    bits = [binarize_rating(rating) for rating in ratings]
    n = len(bits)
    sound_votes = sum(s for s, _ in bits)
    novel_votes = sum(v for _, v in bits)
    return 2 * sound_votes > n and 2 * novel_votes > n


class ReviewStore:
    """Ratings, veto records, and gate decisions per discovery, with audit trail."""

    def __init__(self, store: Store):
        self.store = store
        self.store.ensure_layout()

    def _path(self, discovery_id: str):
        return self.store.reviews_dir / f"{discovery_id}.json"

    def _load(self, discovery_id: str) -> dict:
        path = self._path(discovery_id)
        if path.exists():
            return read_json(path)
        return {"discovery_id": discovery_id, "ratings": [], "internal": None, "audit": []}

    def add_ratings(self, discovery_id: str, ratings: Sequence[ReviewRating]) -> GateDecision:
        data = self._load(discovery_id)
        for rating in ratings:
            data["ratings"].append(rating.to_dict())
            data["audit"].append({"event": "rating", "reviewer": rating.reviewer_id})
        return self._decide_and_save(data)

    def set_internal(self, discovery_id: str, passed: bool, notes: str = "") -> GateDecision:
        data = self._load(discovery_id)
        data["internal"] = {"passed": passed, "notes": notes}
        data["audit"].append({"event": "internal", "passed": passed})
        return self._decide_and_save(data)

    def ratings(self, discovery_id: str) -> list[ReviewRating]:
        return [ReviewRating.from_dict(r) for r in self._load(discovery_id)["ratings"]]

    def gate(self, discovery_id: str) -> GateDecision:
        return self._decision(self._load(discovery_id))

    def _decision(self, data: dict) -> GateDecision:
        ratings = [ReviewRating.from_dict(r) for r in data["ratings"]]
        external = external_gate(ratings) if ratings else False
        internal = bool(data["internal"]["passed"]) if data.get("internal") else False
        return GateDecision(
            discovery_id=data["discovery_id"], external_pass=external, internal_pass=internal
        )

    def _decide_and_save(self, data: dict) -> GateDecision:
        decision = self._decision(data)
        data["gate"] = decision.to_dict()
        write_json(self._path(data["discovery_id"]), data)
        return decision


class MetaStore:
    def __init__(self, store: Store):
        self.store = store
        self.store.ensure_layout()

    def save(self, report: MetaAnalysisReport) -> None:
        write_json(self.store.meta_dir / f"{report.idea_id}.json", report.to_dict())

    def load(self, idea_id: str) -> MetaAnalysisReport | None:
        path = self.store.meta_dir / f"{idea_id}.json"
        if not path.exists():
            return None
        return MetaAnalysisReport.from_dict(read_json(path))
