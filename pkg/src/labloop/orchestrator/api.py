"""Versioned HTTP API under /api/v1: every human touchpoint the console needs.

Polling is the contract for live run status; repeated polls of one run never
report a smaller cost. Auth is a single shared token when configured.
"""

from __future__ import annotations

from typing import Any

from fastapi import Depends, FastAPI, Header, HTTPException
from pydantic import BaseModel, Field

from ..engine import Engine
from ..errors import EngineError, NotFoundError, ValidationError
from ..gateway import BudgetPolicy
from ..ideation import HumanAnnotation
from ..meta import Novelty, ReviewRating, Soundness
from .scheduler import JobSpec, Scheduler


class AnnotationBody(BaseModel):
    rating: str
    notes: str = ""
    conditioning_text: str = ""


class PlanBody(BaseModel):
    idea_id: str


class JobBody(BaseModel):
    plan_id: str
    attempts: int = 5
    concurrency_cap: int = 4
    policy: dict[str, Any] | None = None


class RatingBody(BaseModel):
    reviewer_id: str
    soundness: str
    novelty: str
    justification: str = ""


class RatingsBody(BaseModel):
    ratings: list[RatingBody] = Field(default_factory=list)


class VetoBody(BaseModel):
    passed: bool
    notes: str = ""


def create_app(engine: Engine, scheduler: Scheduler | None = None) -> FastAPI:
    app = FastAPI(title="labloop", version="1")
    scheduler = scheduler or Scheduler(engine)
    app.state.engine = engine
    app.state.scheduler = scheduler

    def check_token(x_auth_token: str | None = Header(default=None)) -> None:
        expected = engine.config.api_token
        if expected and x_auth_token != expected:
            raise HTTPException(status_code=401, detail="bad or missing auth token")

    guarded = [Depends(check_token)]

    def idea_view(idea) -> dict:
        annotation = engine.ideas.annotation(idea.id)
        payload = idea.to_dict()
        payload["annotation"] = annotation.to_dict() if annotation else None
        return payload

    @app.get("/api/v1/health")
    def health() -> dict:
        return {"status": "ok", "root": str(engine.config.root)}

    # -- ideas -----------------------------------------------------------------

    @app.get("/api/v1/ideas", dependencies=guarded)
    def list_ideas() -> list[dict]:
        return [idea_view(idea) for idea in engine.ideas.list_ideas()]

    @app.get("/api/v1/ideas/{idea_id}", dependencies=guarded)
    def get_idea(idea_id: str) -> dict:
        try:
            return idea_view(engine.ideas.get(idea_id))
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/api/v1/ideas/{idea_id}/annotation", dependencies=guarded)
    def post_annotation(idea_id: str, body: AnnotationBody) -> dict:
        try:
            annotation = HumanAnnotation(
                idea_id=idea_id,
                rating=body.rating,
                notes=body.notes,
                conditioning_text=body.conditioning_text,
            )
            engine.annotate(annotation)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return idea_view(engine.ideas.get(idea_id))

    @app.get("/api/v1/triage/queue", dependencies=guarded)
    def triage_queue(
        strata_key: str = "operator",
        per_stratum: int = 10,
        dedup_threshold: float | None = None,
    ) -> list[dict]:
        try:
            queue = engine.triage_queue(strata_key, per_stratum, dedup_threshold)
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return [idea_view(idea) for idea in queue]

    # -- plans ------------------------------------------------------------------

    @app.post("/api/v1/plans", dependencies=guarded)
    def create_plan(body: PlanBody) -> dict:
        try:
            plan = engine.plan_idea(body.idea_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except EngineError as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        return plan.to_meta() | {"text": plan.to_text()}

    @app.get("/api/v1/plans", dependencies=guarded)
    def list_plans() -> list[str]:
        return engine.plans.list_plan_ids()

    @app.get("/api/v1/plans/{plan_id}", dependencies=guarded)
    def get_plan(plan_id: str) -> dict:
        try:
            plan = engine.plans.get(plan_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return plan.to_meta() | {"text": plan.to_text()}

    @app.post("/api/v1/plans/{plan_id}/validate", dependencies=guarded)
    def validate(plan_id: str) -> dict:
        try:
            violations = engine.validate_plan_id(plan_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {"plan_id": plan_id, "violations": violations, "valid": not violations}

    # -- jobs and runs -------------------------------------------------------------

    @app.post("/api/v1/jobs", dependencies=guarded)
    def enqueue(body: JobBody) -> dict:
        policy = BudgetPolicy.from_dict(body.policy) if body.policy else BudgetPolicy()
        try:
            job = JobSpec(
                plan_id=body.plan_id,
                attempts=body.attempts,
                policy=policy,
                concurrency_cap=body.concurrency_cap,
            )
            run_ids = scheduler.enqueue(job)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except (ValidationError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"run_ids": run_ids}

    @app.get("/api/v1/runs", dependencies=guarded)
    def list_runs() -> list[dict]:
        return [engine.run_status(run_id) for run_id in engine.store.list_runs()]

    @app.get("/api/v1/usage", dependencies=guarded)
    def usage() -> dict:
        return engine.usage_overview()

    @app.get("/api/v1/runs/{run_id}/status", dependencies=guarded)
    def run_status(run_id: str) -> dict:
        try:
            return engine.run_status(run_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.get("/api/v1/runs/{run_id}/report", dependencies=guarded)
    def run_report(run_id: str) -> dict:
        report = engine.reports.load_report(run_id)
        if report is None:
            raise HTTPException(status_code=404, detail=f"no report for run {run_id}")
        return report.to_dict()

    @app.get("/api/v1/runs/{run_id}/summary", dependencies=guarded)
    def run_summary(run_id: str) -> dict:
        summary = engine.reports.load_summary(run_id)
        if summary is None:
            raise HTTPException(status_code=404, detail=f"no summary for run {run_id}")
        return summary.to_dict()

    # -- meta and reviews ------------------------------------------------------------

    @app.get("/api/v1/meta/{idea_id}", dependencies=guarded)
    def get_meta(idea_id: str) -> dict:
        report = engine.meta_store.load(idea_id)
        if report is None:
            raise HTTPException(status_code=404, detail=f"no meta-analysis for idea {idea_id}")
        return report.to_dict()

    @app.post("/api/v1/reviews/{discovery_id}/ratings", dependencies=guarded)
    def post_ratings(discovery_id: str, body: RatingsBody) -> dict:
        try:
            ratings = [
                ReviewRating(
                    reviewer_id=r.reviewer_id,
                    soundness=Soundness(r.soundness),
                    novelty=Novelty(r.novelty),
                    justification=r.justification,
                )
                for r in body.ratings
            ]
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        decision = engine.reviews.add_ratings(discovery_id, ratings)
        return decision.to_dict()

    @app.post("/api/v1/reviews/{discovery_id}/veto", dependencies=guarded)
    def post_veto(discovery_id: str, body: VetoBody) -> dict:
        decision = engine.reviews.set_internal(discovery_id, body.passed, body.notes)
        return decision.to_dict()

    @app.get("/api/v1/reviews/{discovery_id}/gate", dependencies=guarded)
    def get_gate(discovery_id: str) -> dict:
        return engine.reviews.gate(discovery_id).to_dict()

    return app
