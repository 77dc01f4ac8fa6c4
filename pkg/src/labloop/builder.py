"""The generate-execute-reflect experiment builder.

One run = one sequential debug loop over a plan: synthesize the program,
execute it in the sandbox at the current pilot tier, reflect on the capture,
then either finish, escalate the tier (same program, tier variable
switched), or regenerate. Every terminal state maps to exactly one outcome
kind; nothing escapes as an exception.
"""

from __future__ import annotations

import hashlib
import os
import re
import time
from dataclasses import dataclass, field

from .config import EngineConfig
from .corpus import LibrarySnapshot
from .errors import (
    BudgetExceededError,
    CodeTooLongError,
    GenerationError,
    TransportError,
    ValidationError,
)
from .gateway import (
    LIMIT_TOTAL,
    BudgetPolicy,
    Gateway,
    ModelSession,
    format_microdollars,
)
from .ideation import extract_fenced_block
from .planning import Plan
from .prompts import PromptLibrary
from .proxy import MeteringProxy
from .sandbox import ExecutionRecord, ExecutionRequest, collect_artifacts, execute
from .store import (
    RUN_STATUS_RUNNING,
    RUN_STATUS_TERMINAL,
    Store,
    atomic_write_bytes,
    atomic_write_text,
    write_json,
)

OUTCOME_COMPLETED = "Completed"
OUTCOME_DEBUG_LIMIT = "DebugLimit"
OUTCOME_HARD_TIME_LIMIT = "HardTimeLimit"
OUTCOME_CODE_TOO_LONG = "CodeTooLong"
OUTCOME_COST_LIMIT = "CostLimit"

OUTCOME_KINDS = (
    OUTCOME_COMPLETED,
    OUTCOME_DEBUG_LIMIT,
    OUTCOME_HARD_TIME_LIMIT,
    OUTCOME_CODE_TOO_LONG,
    OUTCOME_COST_LIMIT,
)

VERDICT_SUCCESS = "success"
VERDICT_CONTINUE = "continue"
VERDICT_ABORT = "abort"

_NO_PROGRESS_WINDOW = 3

_PILOT_MODE_LINE = re.compile(r"""^(\s*PILOT_MODE\s*=\s*)(["'])([A-Z_]+)(["'])""", re.MULTILINE)
_DECISION_TAG = re.compile(r"^\s*DECISION\s*:\s*(success|continue|abort)\s*$", re.IGNORECASE | re.MULTILINE)
_REASON_TAG = re.compile(r"^\s*REASON\s*:\s*(.+)$", re.IGNORECASE | re.MULTILINE)
_FAITHFULNESS_TAG = re.compile(r"^\s*FAITHFULNESS\s*:\s*(.+)$", re.IGNORECASE | re.MULTILINE)
_PATCH_TAG = re.compile(r"^\s*PATCH_INTENT\s*:\s*(.+)$", re.IGNORECASE | re.MULTILINE)


@dataclass(frozen=True)
class ReflectionDecision:
    verdict: str
    faithfulness_notes: str = ""
    code_patch_intent: str = ""
    reason: str = ""
    parse_warning: bool = False

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "faithfulness_notes": self.faithfulness_notes,
            "code_patch_intent": self.code_patch_intent,
            "reason": self.reason,
            "parse_warning": self.parse_warning,
        }


@dataclass(frozen=True)
class RunOutcome:
    kind: str
    detail: str = ""

    def __post_init__(self) -> None:
        if self.kind not in OUTCOME_KINDS:
            raise ValidationError(f"unknown outcome kind: {self.kind}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "detail": self.detail}


@dataclass
class DebugIteration:
    index: int
    tier: str
    code_version: str
    generation_call_ids: list[str] = field(default_factory=list)
    execution: ExecutionRecord | None = None
    reflection: ReflectionDecision | None = None
    warnings: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "index": self.index,
            "tier": self.tier,
            "code_bytes": len(self.code_version.encode("utf-8")),
            "generation_call_ids": self.generation_call_ids,
            "exit_status": self.execution.exit_status if self.execution else None,
            "exit_code": self.execution.exit_code if self.execution else None,
            "duration": self.execution.duration if self.execution else None,
            "verdict": self.reflection.verdict if self.reflection else None,
            "warnings": self.warnings,
        }


@dataclass
class ExperimentRun:
    id: str
    plan_id: str
    attempt_index: int
    tier_history: list[str] = field(default_factory=list)
    iterations: list[DebugIteration] = field(default_factory=list)
    outcome: RunOutcome | None = None
    started_at: float = 0.0
    ended_at: float = 0.0

    def to_meta(self) -> dict:
        return {
            "id": self.id,
            "plan_id": self.plan_id,
            "attempt_index": self.attempt_index,
            "status": RUN_STATUS_TERMINAL if self.outcome else RUN_STATUS_RUNNING,
            "tier_history": self.tier_history,
            "iterations": [iteration.summary() for iteration in self.iterations],
            "outcome": self.outcome.to_dict() if self.outcome else None,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
        }


@dataclass(frozen=True)
class RunTerminalState:
    """Signals classify_outcome needs; independent of how the loop is built."""

    wall_elapsed: float
    iterations_used: int
    completed: bool
    code_too_long: bool = False
    total_budget_exceeded: bool = False
    abort_reason: str | None = None
    last_verdict: str | None = None


def classify_outcome(state: RunTerminalState, policy: BudgetPolicy) -> RunOutcome:
    """Total classification with fixed precedence among co-triggered conditions:
    HardTimeLimit > CostLimit > CodeTooLong > DebugLimit > Completed."""
    if state.wall_elapsed >= policy.hard_time_limit:
        return RunOutcome(
            OUTCOME_HARD_TIME_LIMIT,
            f"wall clock {state.wall_elapsed:.1f}s reached hard limit {policy.hard_time_limit:.1f}s",
        )
    if state.total_budget_exceeded:
        return RunOutcome(OUTCOME_COST_LIMIT, "total cost limit reached")
    if state.code_too_long:
        return RunOutcome(OUTCOME_CODE_TOO_LONG, "generated code hit the output-token ceiling")
    if state.iterations_used >= policy.max_debug_iterations and not state.completed:
        return RunOutcome(
            OUTCOME_DEBUG_LIMIT,
            f"debug iteration limit {policy.max_debug_iterations} reached",
        )
    if state.abort_reason is not None and not state.completed:
        return RunOutcome(OUTCOME_DEBUG_LIMIT, f"aborted early: {state.abort_reason}")
    if state.completed:
        return RunOutcome(OUTCOME_COMPLETED, "experiment completed at terminal tier")
    return RunOutcome(OUTCOME_DEBUG_LIMIT, "stopped before completion")


def switch_tier(code: str, tier: str) -> str:
    """Rewrite the program's PILOT_MODE assignment to the given tier."""
    replaced = _PILOT_MODE_LINE.sub(lambda m: f"{m.group(1)}{m.group(2)}{tier}{m.group(4)}", code, count=1)
    return replaced


def excerpt(data: bytes, window: int = 8 * 1024) -> str:
    """Head+tail windows with an elision marker, decoded leniently."""
    if len(data) <= 2 * window:
        return data.decode("utf-8", errors="replace")
    head = data[:window].decode("utf-8", errors="replace")
    tail = data[-window:].decode("utf-8", errors="replace")
    omitted = len(data) - 2 * window
    return f"{head}\n[... {omitted} bytes elided ...]\n{tail}"


def generate_code(
    plan: Plan,
    codeblocks_text: str,
    prior: DebugIteration | None,
    session: ModelSession,
    prompts: PromptLibrary,
    tier: str,
    retry_cap: int = 3,
    log_excerpt_bytes: int = 8 * 1024,
) -> tuple[str, list[str]]:
    """Synthesize the program; returns (code, generation call ids).

    Raises CodeTooLongError when the provider truncates the response, and
    GenerationError when no parseable program arrives within the retry cap.
    """
    history = ""
    if prior is not None:
        parts = [f"PREVIOUS ATTEMPT (iteration {prior.index}, tier {prior.tier}):"]
        parts.append("```\n" + prior.code_version + "\n```")
        if prior.execution is not None:
            parts.append(
                f"Exit: {prior.execution.exit_status}"
                + (f" (code {prior.execution.exit_code})" if prior.execution.exit_code is not None else "")
            )
            parts.append("STDOUT excerpt:\n" + excerpt(prior.execution.stdout, log_excerpt_bytes))
            parts.append("STDERR excerpt:\n" + excerpt(prior.execution.stderr, log_excerpt_bytes))
        if prior.reflection is not None:
            parts.append("Reflection: " + prior.reflection.code_patch_intent)
        history = "\n\n".join(parts)
    prompt = prompts.render(
        "debugging",
        plan=plan.to_text(),
        codeblocks=codeblocks_text,
        tier=tier,
        history=history,
    )
    call_ids: list[str] = []
    last_error = ""
    raw = ""
    for _attempt in range(retry_cap):
        raw, usage = session.complete(prompt)
        call_ids.append(usage.call_id)
        if usage.truncated:
            raise CodeTooLongError("generation output truncated at the token ceiling")
        try:
            return extract_fenced_block(raw), call_ids
        except ValidationError:
            last_error = "no fenced code block in output"
    raise GenerationError(
        f"code generation failed after {retry_cap} attempts: {last_error}", raw_output=raw
    )


def parse_reflection(raw: str) -> ReflectionDecision:
    match = _DECISION_TAG.search(raw)
    if not match:
        raise ValidationError("reflection output missing DECISION tag")
    verdict = match.group(1).lower()
    reason_match = _REASON_TAG.search(raw)
    faith_match = _FAITHFULNESS_TAG.search(raw)
    patch_match = _PATCH_TAG.search(raw)
    if verdict == VERDICT_ABORT and not reason_match:
        raise ValidationError("abort decision must carry a REASON tag")
    return ReflectionDecision(
        verdict=verdict,
        faithfulness_notes=faith_match.group(1).strip() if faith_match else "",
        code_patch_intent=patch_match.group(1).strip() if patch_match else "",
        reason=reason_match.group(1).strip() if reason_match else "",
    )


def reflect(
    plan: Plan,
    iteration: DebugIteration,
    iteration_cost: int,
    session: ModelSession,
    retry_cap: int = 3,
    log_excerpt_bytes: int = 8 * 1024,
) -> ReflectionDecision:
    """Judge one executed iteration; malformed replies degrade to continue."""
    execution = iteration.execution
    assert execution is not None, "reflect requires a finished execution"
    prompt = "\n\n".join(
        [
            "You are reflecting on one experiment debug iteration. Decide whether "
            "the experiment completed successfully AND faithfully at this tier, "
            "should continue with code changes, or must be aborted as infeasible.",
            f"Tier: {iteration.tier}",
            "Success criteria:\n" + plan.section("success_criteria"),
            f"Exit status: {execution.exit_status}"
            + (f" (code {execution.exit_code})" if execution.exit_code is not None else ""),
            "STDOUT excerpt:\n" + excerpt(execution.stdout, log_excerpt_bytes),
            "STDERR excerpt:\n" + excerpt(execution.stderr, log_excerpt_bytes),
            "Artifacts: " + (", ".join(execution.artifacts) if execution.artifacts else "(none)"),
            f"Model usage this iteration: {format_microdollars(iteration_cost)}",
            "Reply with these tags, one per line:\n"
            "DECISION: success | continue | abort\n"
            "REASON: (required for abort)\n"
            "FAITHFULNESS: short note\n"
            "PATCH_INTENT: what to change if continuing",
        ]
    )
    for _attempt in range(retry_cap):
        raw, _usage = session.complete(prompt)
        try:
            return parse_reflection(raw)
        except ValidationError:
            continue
    return ReflectionDecision(
        verdict=VERDICT_CONTINUE,
        code_patch_intent="reflection output unparseable; retrying generation",
        parse_warning=True,
    )


def _error_signature(execution: ExecutionRecord | None) -> str:
    if execution is None:
        return "no-execution"
    tail = execution.stderr[-2048:]
    basis = f"{execution.exit_status}:{execution.exit_code}:".encode() + tail
    return hashlib.sha256(basis).hexdigest()


def run_experiment(
    plan: Plan,
    policy: BudgetPolicy,
    gateway: Gateway,
    library: LibrarySnapshot,
    store: Store,
    prompts: PromptLibrary,
    config: EngineConfig,
    attempt_index: int = 1,
    proxy: MeteringProxy | None = None,
    run_id: str | None = None,
) -> ExperimentRun:
    """Execute the full debug loop for one attempt; never raises."""
    run_id = run_id or f"{plan.id[:12]}-a{attempt_index}"
    gateway.open_ledger(run_id, policy)
    run = ExperimentRun(
        id=run_id, plan_id=plan.id, attempt_index=attempt_index, started_at=time.time()
    )
    run_dir = store.run_dir(run_id)
    run_dir.mkdir(parents=True, exist_ok=True)

    meta = run.to_meta()
    meta["supervisor_pid"] = os.getpid()
    store.write_run_meta(run_id, meta)

    token = f"tok-{run_id}"
    if proxy is not None:
        proxy.register_token(token, run_id)

    codeblocks_text = "\n\n".join(
        f"### {library.get(bid).name} (id={bid})\n{library.get(bid).code_text}"
        for bid in plan.codeblock_ids
        if bid in library.ids()
    ) or "(no codeblocks selected)"

    tiers = list(plan.tiers)
    tier_index = 0
    run.tier_history.append(tiers[0].name)

    start_mono = time.monotonic()
    code: str | None = None
    need_generation = True
    completed = False
    code_too_long = False
    total_budget_exceeded = False
    abort_reason: str | None = None
    recent_signatures: list[str] = []

    def elapsed() -> float:
        return time.monotonic() - start_mono

    try:
        while True:
            if elapsed() >= policy.hard_time_limit:
                break
            if len(run.iterations) >= policy.max_debug_iterations:
                break
            if completed or code_too_long or total_budget_exceeded or abort_reason:
                break

            index = len(run.iterations) + 1
            tier = tiers[tier_index]
            gateway.set_iteration(run_id, index)
            session = gateway.session(run_id, config.pipeline_model, iteration_index=index)
            iteration = DebugIteration(index=index, tier=tier.name, code_version="")
            iter_dir = store.iter_dir(run_id, index)
            workdir = iter_dir / "work"
            workdir.mkdir(parents=True, exist_ok=True)

            prior = run.iterations[-1] if run.iterations else None
            if need_generation:
                try:
                    code, call_ids = generate_code(
                        plan,
                        codeblocks_text,
                        prior,
                        session,
                        prompts,
                        tier.name,
                        retry_cap=config.retry_cap,
                        log_excerpt_bytes=config.log_excerpt_bytes,
                    )
                    iteration.generation_call_ids = call_ids
                except CodeTooLongError:
                    code_too_long = True
                    run.iterations.append(iteration)
                    _persist_iteration(store, run_id, iteration, None)
                    break
                except BudgetExceededError as exc:
                    if exc.limit == LIMIT_TOTAL:
                        total_budget_exceeded = True
                        break
                    iteration.warnings.append(f"generation denied: {exc}")
                    run.iterations.append(iteration)
                    _persist_iteration(store, run_id, iteration, None)
                    _update_running_meta(store, run, gateway)
                    continue
                except (GenerationError, TransportError) as exc:
                    iteration.warnings.append(f"generation failed: {exc}")
                    run.iterations.append(iteration)
                    _persist_iteration(store, run_id, iteration, None)
                    _update_running_meta(store, run, gateway)
                    continue
            else:
                assert code is not None
                code = switch_tier(code, tier.name)

            iteration.code_version = code
            entry = workdir / config.language.entry_filename
            atomic_write_text(entry, code)

            env = {"PILOT_MODE": tier.name, "RUN_ID": run_id, "ITERATION": str(index)}
            if proxy is not None:
                env["MODEL_PROXY_URL"] = proxy.address
                env["RUN_TOKEN"] = token
            time_limit = min(
                policy.execution_time_limit_per_iteration,
                max(0.05, policy.hard_time_limit - elapsed()) + 1.0,
            )
            request = ExecutionRequest(
                run_id=run_id,
                iteration_index=index,
                workdir=workdir,
                entry_command=tuple(config.language.command),
                env=env,
                time_limit=time_limit,
            )
            iteration.execution = execute(request, stream_cap=config.stream_cap_bytes)
            _persist_iteration(store, run_id, iteration, workdir)

            if elapsed() >= policy.hard_time_limit:
                run.iterations.append(iteration)
                break

            iteration_cost = gateway.ledger(run_id).iteration_total(index)
            try:
                decision = reflect(
                    plan,
                    iteration,
                    iteration_cost,
                    session,
                    retry_cap=config.retry_cap,
                    log_excerpt_bytes=config.log_excerpt_bytes,
                )
            except BudgetExceededError as exc:
                if exc.limit == LIMIT_TOTAL:
                    total_budget_exceeded = True
                    run.iterations.append(iteration)
                    break
                decision = ReflectionDecision(
                    verdict=VERDICT_CONTINUE,
                    code_patch_intent=f"reflection denied: {exc}",
                    parse_warning=True,
                )
            except TransportError as exc:
                decision = ReflectionDecision(
                    verdict=VERDICT_CONTINUE,
                    code_patch_intent=f"reflection transport failure: {exc}",
                    parse_warning=True,
                )
            iteration.reflection = decision
            if decision.parse_warning:
                iteration.warnings.append("reflection degraded to continue")
            run.iterations.append(iteration)
            _persist_iteration(store, run_id, iteration, workdir)
            _update_running_meta(store, run, gateway)

            if decision.verdict == VERDICT_SUCCESS:
                if tier.stop_after or tier_index == len(tiers) - 1:
                    completed = True
                else:
                    tier_index += 1
                    run.tier_history.append(tiers[tier_index].name)
                    need_generation = False
                recent_signatures.clear()
            elif decision.verdict == VERDICT_ABORT:
                abort_reason = decision.reason or "model aborted"
            else:
                need_generation = True
                signature = _error_signature(iteration.execution)
                prior_code = prior.code_version if prior else None
                if prior_code == iteration.code_version:
                    recent_signatures.append(signature)
                else:
                    recent_signatures = [signature]
                if (
                    len(recent_signatures) >= _NO_PROGRESS_WINDOW
                    and len(set(recent_signatures[-_NO_PROGRESS_WINDOW:])) == 1
                ):
                    abort_reason = (
                        f"no progress: {_NO_PROGRESS_WINDOW} identical error signatures "
                        "with no code change"
                    )
    except BudgetExceededError as exc:
        if exc.limit == LIMIT_TOTAL:
            total_budget_exceeded = True
        else:  # pragma: no cover - per-iteration denials are handled inline
            abort_reason = str(exc)

    last_verdict = None
    for iteration in reversed(run.iterations):
        if iteration.reflection is not None:
            last_verdict = iteration.reflection.verdict
            break
    state = RunTerminalState(
        wall_elapsed=elapsed(),
        iterations_used=len(run.iterations),
        completed=completed,
        code_too_long=code_too_long,
        total_budget_exceeded=total_budget_exceeded,
        abort_reason=abort_reason,
        last_verdict=last_verdict,
    )
    run.outcome = classify_outcome(state, policy)
    run.ended_at = time.time()

    if proxy is not None:
        proxy.revoke_token(token)

    meta = run.to_meta()
    meta["ledger_total"] = gateway.ledger(run_id).total
    store.write_run_meta(run_id, meta)
    return run


def _persist_iteration(
    store: Store, run_id: str, iteration: DebugIteration, workdir
) -> None:
    iter_dir = store.iter_dir(run_id, iteration.index)
    iter_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(iter_dir / "code", iteration.code_version)
    execution = iteration.execution
    if execution is not None:
        atomic_write_bytes(iter_dir / "stdout", execution.stdout)
        atomic_write_bytes(iter_dir / "stderr", execution.stderr)
        logs_dir = iter_dir / "logs"
        logs_dir.mkdir(exist_ok=True)
        for rel, data in execution.log_files:
            target = logs_dir / rel.replace("/", "__")
            atomic_write_bytes(target, data)
        if workdir is not None:
            digests, warnings = collect_artifacts(execution, workdir, iter_dir / "artifacts")
            iteration.warnings.extend(warnings)
            write_json(
                iter_dir / "artifacts.json",
                {"digests": [{"path": p, "sha256": d} for p, d in digests]},
            )
    write_json(iter_dir / "iteration.json", iteration.summary())


def _update_running_meta(store: Store, run: ExperimentRun, gateway: Gateway) -> None:
    meta = run.to_meta()
    meta["supervisor_pid"] = os.getpid()
    meta["ledger_total"] = gateway.ledger(run.id).total
    store.write_run_meta(run.id, meta)
