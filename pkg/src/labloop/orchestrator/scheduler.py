"""Run scheduler: N attempts per plan, bounded concurrency, auto meta-analysis."""

from __future__ import annotations

import threading
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field

from ..engine import Engine
from ..errors import NotFoundError
from ..gateway import BudgetPolicy
from ..store import RUN_STATUS_QUEUED


@dataclass(frozen=True)
class JobSpec:
    plan_id: str
    attempts: int = 5
    policy: BudgetPolicy = field(default_factory=BudgetPolicy)
    concurrency_cap: int = 4

    def __post_init__(self) -> None:
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")
        if self.concurrency_cap < 1:
            raise ValueError("concurrency_cap must be >= 1")


class Scheduler:
    """Owns run lifecycles; at most ``concurrency_cap`` runs execute at once."""

    def __init__(self, engine: Engine, concurrency_cap: int = 4):
        self.engine = engine
        self.concurrency_cap = concurrency_cap
        self._executor = ThreadPoolExecutor(max_workers=concurrency_cap)
        self._lock = threading.Lock()
        self._pending_by_plan: dict[str, set[str]] = {}
        self._futures: list[Future] = []
        self._running_now = 0
        self.max_observed_running = 0

    def enqueue(self, job: JobSpec) -> list[str]:
        """Create N queued runs for the plan and hand them to the pool."""
        plan = self.engine.plans.get(job.plan_id)  # NotFoundError for bad ids
        run_ids = []
        job_gate = threading.BoundedSemaphore(job.concurrency_cap)
        for attempt in range(1, job.attempts + 1):
            run_id = f"{plan.id[:12]}-a{attempt}"
            run_ids.append(run_id)
            self.engine.store.run_dir(run_id).mkdir(parents=True, exist_ok=True)
            self.engine.store.write_run_meta(
                run_id,
                {
                    "id": run_id,
                    "plan_id": plan.id,
                    "attempt_index": attempt,
                    "status": RUN_STATUS_QUEUED,
                    "outcome": None,
                },
            )
        with self._lock:
            self._pending_by_plan.setdefault(plan.id, set()).update(run_ids)
        for attempt, run_id in enumerate(run_ids, start=1):
            future = self._executor.submit(
                self._execute, plan.id, attempt, job.policy, run_id, job_gate
            )
            self._futures.append(future)
        return run_ids

    def _execute(
        self,
        plan_id: str,
        attempt: int,
        policy: BudgetPolicy,
        run_id: str,
        job_gate: threading.BoundedSemaphore,
    ) -> str:
        plan = self.engine.plans.get(plan_id)
        with job_gate:
            with self._lock:
                self._running_now += 1
                self.max_observed_running = max(self.max_observed_running, self._running_now)
            try:
                self.engine.execute_attempt(plan, attempt, policy)
            finally:
                with self._lock:
                    self._running_now -= 1
        self._mark_done(plan, run_id)
        return run_id

    def _mark_done(self, plan, run_id: str) -> None:
        trigger_meta = False
        with self._lock:
            pending = self._pending_by_plan.get(plan.id)
            if pending is not None:
                pending.discard(run_id)
                if not pending:
                    del self._pending_by_plan[plan.id]
                    trigger_meta = True
        if trigger_meta:
            try:
                self.engine.build_meta(plan.idea_id, plan)
            except NotFoundError:
                pass  # plan without a stored idea (e.g. ad-hoc test plan)

    def wait_all(self, timeout: float | None = None) -> None:
        for future in list(self._futures):
            future.result(timeout=timeout)

    def shutdown(self) -> None:
        self._executor.shutdown(wait=True)
