"""Report and summary generation with hypothesis verdicts.

Completed runs get a full written report (typeset source) plus a 1-3
sentence machine-actionable summary with a verdict tag; non-completed runs
get a failure digest instead. An "interesting" flag marks results worth
human attention. Verdicts are never silently defaulted: a missing tag is a
summary error and the run is queued for a human.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .builder import OUTCOME_COMPLETED, ExperimentRun, excerpt
from .ideation import extract_fenced_block
from .errors import GenerationError, ValidationError
from .gateway import ModelSession
from .planning import Plan
from .prompts import PromptLibrary
from .store import Store, atomic_write_text, read_json, write_json

VERDICT_SUPPORTS = "supports"
VERDICT_REJECTS = "rejects"
VERDICT_INCONCLUSIVE = "inconclusive"
VERDICT_KINDS = (VERDICT_SUPPORTS, VERDICT_REJECTS, VERDICT_INCONCLUSIVE)

_VERDICT_TAG = re.compile(
    r"^\s*VERDICT\s*:\s*(supports|rejects|inconclusive)\s*\|?.*$",
    re.IGNORECASE | re.MULTILINE,
)
_INTERESTING_TAG = re.compile(
    r"^\s*INTERESTING\s*:\s*(yes|no)\s*$", re.IGNORECASE | re.MULTILINE
)

_INTERESTING_PROMPT = (
    "A result is interesting when it is surprising, clearly positive or clearly "
    "negative with support in the numbers, or opens an obvious follow-up. Decide "
    "for the summary below and reply with one line 'INTERESTING: yes' or "
    "'INTERESTING: no' followed by one line of rationale.\n\nSUMMARY:\n{summary}"
)


@dataclass(frozen=True)
class Report:
    run_id: str
    document: str
    figures: tuple[str, ...] = ()
    is_failure_digest: bool = False

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "document": self.document,
            "figures": list(self.figures),
            "is_failure_digest": self.is_failure_digest,
        }


@dataclass(frozen=True)
class ResultSummary:
    run_id: str
    text: str
    verdict: str | None
    interesting: bool = False
    interesting_rationale: str = ""

    def __post_init__(self) -> None:
        if self.verdict is not None and self.verdict not in VERDICT_KINDS:
            raise ValidationError(f"unknown verdict: {self.verdict}")

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "text": self.text,
            "verdict": self.verdict,
            "interesting": self.interesting,
            "interesting_rationale": self.interesting_rationale,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ResultSummary":
        return cls(
            run_id=data["run_id"],
            text=data["text"],
            verdict=data.get("verdict"),
            interesting=bool(data.get("interesting", False)),
            interesting_rationale=data.get("interesting_rationale", ""),
        )


def parse_verdict(raw: str) -> str:
    match = _VERDICT_TAG.search(raw)
    if not match:
        raise ValidationError("summary output missing VERDICT tag")
    return match.group(1).lower()


def emit_verdict_line(kind: str) -> str:
    if kind not in VERDICT_KINDS:
        raise ValidationError(f"unknown verdict: {kind}")
    return f"VERDICT: {kind}"


def failure_digest(run: ExperimentRun) -> str:
    """Compact description of a non-completed run for humans and the summarizer."""
    assert run.outcome is not None
    lines = [
        f"Run {run.id} did not complete.",
        f"Outcome: {run.outcome.kind} - {run.outcome.detail}",
        f"Iterations used: {len(run.iterations)}",
        f"Tier history: {', '.join(run.tier_history) or '(none)'}",
    ]
    for iteration in reversed(run.iterations):
        if iteration.execution is not None:
            lines.append(
                f"Last execution (iteration {iteration.index}): "
                f"{iteration.execution.exit_status}"
            )
            stderr_tail = excerpt(iteration.execution.stderr, 1024)
            if stderr_tail.strip():
                lines.append("Last stderr excerpt:\n" + stderr_tail)
            break
    return "\n".join(lines)


def build_report(
    plan: Plan,
    run: ExperimentRun,
    session: ModelSession,
    prompts: PromptLibrary,
    retry_cap: int = 3,
    log_excerpt_bytes: int = 8 * 1024,
) -> Report:
    """Write the full report for a Completed run, or a failure digest otherwise."""
    assert run.outcome is not None, "reporting requires a terminal run"
    if run.outcome.kind != OUTCOME_COMPLETED:
        return Report(run_id=run.id, document=failure_digest(run), is_failure_digest=True)

    final_code = ""
    artifacts: list[str] = []
    log_parts: list[str] = []
    for iteration in run.iterations:
        if iteration.code_version:
            final_code = iteration.code_version
        if iteration.execution is not None:
            artifacts = iteration.execution.artifacts
            log_parts = [
                "STDOUT:\n" + excerpt(iteration.execution.stdout, log_excerpt_bytes),
                "STDERR:\n" + excerpt(iteration.execution.stderr, log_excerpt_bytes),
            ]
            for rel, data in iteration.execution.log_files:
                log_parts.append(f"LOG {rel}:\n" + excerpt(data, log_excerpt_bytes))

    prompt = prompts.render(
        "report",
        plan=plan.to_text(),
        code=final_code,
        artifact_listing="\n".join(artifacts) or "(none)",
        log_excerpts="\n\n".join(log_parts) or "(none)",
    )
    raw = ""
    for _attempt in range(retry_cap):
        raw, _usage = session.complete(prompt)
        try:
            document = extract_fenced_block(raw)
        except ValidationError:
            continue
        figures = tuple(a for a in artifacts if a.lower().endswith((".pdf", ".png", ".svg")))
        return Report(run_id=run.id, document=document, figures=figures)
    raise GenerationError(
        f"report generation failed after {retry_cap} attempts", raw_output=raw
    )


def summarize(
    plan: Plan,
    run: ExperimentRun,
    report: Report,
    session: ModelSession,
    prompts: PromptLibrary,
    retry_cap: int = 3,
) -> ResultSummary:
    """Produce the 1-3 sentence summary and parse the verdict tag strictly."""
    prompt = prompts.render("summary", plan=plan.to_text(), report=report.document)
    raw = ""
    for _attempt in range(retry_cap):
        raw, _usage = session.complete(prompt)
        try:
            verdict = parse_verdict(raw)
        except ValidationError:
            continue
        text = _VERDICT_TAG.sub("", raw).strip()
        return ResultSummary(run_id=run.id, text=text or raw.strip(), verdict=verdict)
    raise GenerationError(
        f"summary verdict unparseable after {retry_cap} attempts; run needs human review",
        raw_output=raw,
    )


def flag_interesting(
    summary: ResultSummary, session: ModelSession, retry_cap: int = 3
) -> tuple[bool, str]:
    """Heuristic human-attention flag; malformed output is a conservative no."""
    prompt = _INTERESTING_PROMPT.format(summary=summary.text)
    raw = ""
    for _attempt in range(retry_cap):
        raw, _usage = session.complete(prompt)
        match = _INTERESTING_TAG.search(raw)
        if match:
            rationale = _INTERESTING_TAG.sub("", raw).strip()
            return match.group(1).lower() == "yes", rationale
    return False, "interesting flag unparseable; defaulting to no (warning)"


def render_document(document: str, out_path) -> None:
    """Render report source to a portable PDF beside the source.

    Failures raise; callers treat rendering as best-effort and keep the
    source either way.
    """
    if not document.strip():
        raise ValidationError("cannot render an empty document")
    from reportlab.lib.pagesizes import letter
    from reportlab.lib.styles import getSampleStyleSheet
    from reportlab.platypus import Paragraph, Preformatted, SimpleDocTemplate, Spacer

    styles = getSampleStyleSheet()
    doc = SimpleDocTemplate(str(out_path), pagesize=letter)
    flowables = []
    for block in document.split("\n\n"):
        if not block.strip():
            continue
        if block.lstrip().startswith(("\\", "%", "#", ">", " ")):
            flowables.append(Preformatted(block, styles["Code"]))
        else:
            flowables.append(Paragraph(block.replace("\n", "<br/>"), styles["BodyText"]))
        flowables.append(Spacer(1, 8))
    doc.build(flowables)


class ReportStore:
    """Persists report source, rendered output, and summary.meta per run."""

    def __init__(self, store: Store):
        self.store = store

    def report_dir(self, run_id: str):
        return self.store.run_dir(run_id) / "report"

    def save_report(self, report: Report) -> None:
        directory = self.report_dir(report.run_id)
        directory.mkdir(parents=True, exist_ok=True)
        atomic_write_text(directory / "report_source", report.document)
        write_json(
            directory / "report.meta.json",
            {
                "run_id": report.run_id,
                "figures": list(report.figures),
                "is_failure_digest": report.is_failure_digest,
            },
        )

    def save_summary(self, summary: ResultSummary) -> None:
        directory = self.report_dir(summary.run_id)
        directory.mkdir(parents=True, exist_ok=True)
        write_json(directory / "summary.meta", summary.to_dict())

    def load_report(self, run_id: str) -> Report | None:
        directory = self.report_dir(run_id)
        source = directory / "report_source"
        if not source.exists():
            return None
        meta = read_json(directory / "report.meta.json")
        return Report(
            run_id=run_id,
            document=source.read_text(encoding="utf-8"),
            figures=tuple(meta.get("figures", ())),
            is_failure_digest=bool(meta.get("is_failure_digest", False)),
        )

    def load_summary(self, run_id: str) -> ResultSummary | None:
        path = self.report_dir(run_id) / "summary.meta"
        if not path.exists():
            return None
        return ResultSummary.from_dict(read_json(path))

    def render(self, report: Report) -> tuple[bool, str]:
        """Best-effort render; returns (ok, detail). Source is already saved."""
        directory = self.report_dir(report.run_id)
        directory.mkdir(parents=True, exist_ok=True)
        target = directory / "report_rendered.pdf"
        try:
            render_document(report.document, target)
        except Exception as exc:
            write_json(directory / "render_error.json", {"error": str(exc)})
            return False, str(exc)
        return True, str(target)
