"""Engine facade: wires store, corpus, gateway, sandbox pipeline, and stages.

One Engine owns one storage root. Providers come either from a scenario file
(scripted, fully offline) or a provider config (HTTP); pricing defaults are
overridable by both. Every pipeline stage below is a thin composition of the
stage modules, so tests can also drive those directly.
"""

from __future__ import annotations

import itertools
from pathlib import Path
from typing import Iterable, Sequence

import yaml

from .builder import OUTCOME_COMPLETED, ExperimentRun, run_experiment
from .config import EngineConfig
from .corpus import Corpus
from .errors import EngineError, NotFoundError
from .gateway import (
    BudgetPolicy,
    Gateway,
    ModelSession,
    PricingTable,
    ProviderConfig,
)
from .ideation import (
    GeneticOperator,
    HumanAnnotation,
    Idea,
    IdeaStore,
    dedup_filter,
    generate_ideas,
    select_batch,
)
from .meta import MetaAnalysisReport, MetaStore, ReviewStore, meta_report
from .planning import Plan, PlanStore, make_plan, validate_plan
from .prompts import PromptLibrary
from .providers import HTTPProvider, ModelProvider, NullProvider, ScriptedProvider
from .proxy import MeteringProxy
from .reporting import ReportStore, ResultSummary, build_report, flag_interesting, summarize
from .store import RUN_STATUS_TERMINAL, Store

DEFAULT_PRICING = PricingTable(input_price=150_000, output_price=600_000)  # $0.15/$0.60 per 1M


class Engine:
    def __init__(self, config: EngineConfig, provider: ModelProvider | None = None):
        self.config = config
        self.store = Store(config.root)
        self.store.ensure_layout()
        self.prompts = PromptLibrary(self.store.prompts_dir)
        self.prompts.scaffold_defaults()
        self.corpus = Corpus(self.store)
        self.ideas = IdeaStore(self.store)
        self.plans = PlanStore(self.store)
        self.reports = ReportStore(self.store)
        self.meta_store = MetaStore(self.store)
        self.reviews = ReviewStore(self.store)

        pricing: dict[str, PricingTable] = {
            config.pipeline_model: DEFAULT_PRICING,
            config.target_model: DEFAULT_PRICING,
        }
        scenario_pricing: dict[str, PricingTable] = {}
        if provider is None:
            if config.scenario_path is not None:
                scenario = yaml.safe_load(Path(config.scenario_path).read_text(encoding="utf-8")) or {}
                provider = ScriptedProvider(scenario)
                scenario_pricing = _parse_pricing(scenario.get("pricing") or {})
            elif config.provider_config_path is not None:
                provider_config = ProviderConfig.from_file(config.provider_config_path)
                provider = HTTPProvider(
                    endpoint=provider_config.endpoint,
                    credential_env=provider_config.credential_env,
                    worst_case_output_tokens=config.max_output_tokens,
                )
                pricing.update(provider_config.models)
            else:
                # Model-free stages (ingest, triage, review, status) still work;
                # any actual model call fails with a clear transport error.
                provider = NullProvider()
        pricing.update(scenario_pricing)
        self.provider = provider
        self.gateway = Gateway(provider, pricing, store=self.store)
        self._proxy: MeteringProxy | None = None

    # -- infrastructure ------------------------------------------------------

    @property
    def proxy(self) -> MeteringProxy:
        if self._proxy is None:
            self._proxy = MeteringProxy(self.gateway).start()
        return self._proxy

    def close(self) -> None:
        if self._proxy is not None:
            self._proxy.close()
            self._proxy = None

    def recover(self) -> list[str]:
        return self.store.recover()

    def _pipeline_session(self, run_id: str, iteration: int = 0) -> ModelSession:
        return self.gateway.session(run_id, self.config.pipeline_model, iteration_index=iteration)

    # -- ingestion ------------------------------------------------------------

    def ingest_paper_text(self, text: str, title: str = "", topics: Iterable[str] = ()):
        return self.corpus.ingest_paper(text, title=title, topics=topics)

    def ingest_paper_file(self, path: Path):
        return self.corpus.ingest_paper(Path(path).read_text(encoding="utf-8"))

    def ingest_codeblock_file(self, path: Path):
        return self.corpus.ingest_codeblock(Path(path).read_text(encoding="utf-8"))

    # -- ideation ---------------------------------------------------------------

    def ideate(
        self,
        pairs: int,
        seed: int,
        per_pair: int = 1,
        operators: Sequence[GeneticOperator] | None = None,
        session_id: str = "ideation",
    ) -> list[Idea]:
        """Sample paper pairs and generate ideas, cycling the genetic operators."""
        operators = list(operators or GeneticOperator)
        library = self.corpus.library_snapshot()
        sampled = self.corpus.sample_paper_pairs(pairs, seed)
        session = self._pipeline_session(session_id)
        operator_cycle = itertools.cycle(operators)
        generated: list[Idea] = []
        for pair in sampled:
            papers = (self.corpus.get_paper(pair[0]), self.corpus.get_paper(pair[1]))
            ideas = generate_ideas(
                papers,
                library,
                next(operator_cycle),
                session,
                self.prompts,
                count=per_pair,
                retry_cap=self.config.retry_cap,
            )
            for idea in ideas:
                self.ideas.add(idea)
            generated.extend(ideas)
        return generated

    def triage_queue(
        self,
        strata_key: str = "operator",
        per_stratum: int = 10,
        dedup_threshold: float | None = None,
    ) -> list[Idea]:
        ideas = self.ideas.list_ideas()
        threshold = self.config.dedup_threshold if dedup_threshold is None else dedup_threshold
        kept, _dropped = dedup_filter(ideas, threshold)
        return select_batch(kept, strata_key, per_stratum)

    def annotate(self, annotation: HumanAnnotation) -> Idea:
        return self.ideas.annotate(annotation)

    # -- planning ---------------------------------------------------------------

    def plan_idea(self, idea_id: str) -> Plan:
        idea = self.ideas.get(idea_id)
        annotation = self.ideas.annotation(idea_id)
        library = self.corpus.library_snapshot()
        session = self._pipeline_session(f"planning-{idea_id}")
        plan = make_plan(
            idea,
            annotation,
            library,
            session,
            self.prompts,
            target_model=self.config.target_model,
            retry_cap=self.config.retry_cap,
        )
        self.plans.save(plan)
        return plan

    def validate_plan_id(self, plan_id: str) -> list[str]:
        plan = self.plans.get(plan_id)
        return validate_plan(plan, self.corpus.library_snapshot())

    # -- building ----------------------------------------------------------------

    def execute_attempt(
        self, plan: Plan, attempt_index: int, policy: BudgetPolicy
    ) -> ExperimentRun:
        """One full attempt: build loop, then the reporting stage."""
        run = run_experiment(
            plan,
            policy,
            self.gateway,
            self.corpus.library_snapshot(),
            self.store,
            self.prompts,
            self.config,
            attempt_index=attempt_index,
            proxy=self.proxy,
        )
        self.report_run(run, plan)
        return run

    def report_run(self, run: ExperimentRun, plan: Plan) -> ResultSummary | None:
        """Reporting stage: report (or failure digest), summary, interesting flag."""
        assert run.outcome is not None
        last_iter = max((it.index for it in run.iterations), default=0)
        session = self.gateway.session(
            run.id, self.config.pipeline_model, iteration_index=last_iter
        )
        try:
            report = build_report(
                plan,
                run,
                session,
                self.prompts,
                retry_cap=self.config.retry_cap,
                log_excerpt_bytes=self.config.log_excerpt_bytes,
            )
        except EngineError as exc:
            self._mark_needs_human(run.id, f"report failed: {exc}")
            return None
        self.reports.save_report(report)
        if run.outcome.kind != OUTCOME_COMPLETED:
            # Non-completed runs end with a failure digest, not a summary.
            return None
        try:
            summary = summarize(
                plan, run, report, session, self.prompts, retry_cap=self.config.retry_cap
            )
        except EngineError as exc:
            self._mark_needs_human(run.id, f"summary failed: {exc}")
            return None
        interesting, rationale = flag_interesting(
            summary, session, retry_cap=self.config.retry_cap
        )
        summary = ResultSummary(
            run_id=summary.run_id,
            text=summary.text,
            verdict=summary.verdict,
            interesting=interesting,
            interesting_rationale=rationale,
        )
        self.reports.save_summary(summary)
        return summary

    def _mark_needs_human(self, run_id: str, reason: str) -> None:
        meta = self.store.read_run_meta(run_id)
        meta["needs_human"] = reason
        self.store.write_run_meta(run_id, meta)

    # -- meta-analysis -------------------------------------------------------------

    def runs_for_plan(self, plan_id: str) -> list[tuple[str, dict]]:
        return [
            (run_id, meta)
            for run_id, meta in self.store.iter_run_metas()
            if meta.get("plan_id") == plan_id
        ]

    def plan_for_idea(self, idea_id: str) -> Plan:
        candidates = [
            self.plans.get(plan_id)
            for plan_id in self.plans.list_plan_ids()
        ]
        matches = [plan for plan in candidates if plan.idea_id == idea_id]
        if not matches:
            raise NotFoundError(f"no plan found for idea {idea_id}")
        return matches[-1]

    def build_meta(self, idea_id: str, plan: Plan | None = None) -> MetaAnalysisReport:
        plan = plan or self.plan_for_idea(idea_id)
        runs = self.runs_for_plan(plan.id)
        if not runs:
            raise EngineError("runs pending: no attempts recorded for this plan")
        pending = [rid for rid, meta in runs if meta.get("status") != RUN_STATUS_TERMINAL]
        if pending:
            raise EngineError(f"runs pending: {', '.join(sorted(pending))}")

        runs.sort(key=lambda item: item[1].get("attempt_index", 0))
        attempts: list[tuple[str, str, str | None]] = []
        summaries: list[ResultSummary] = []
        for run_id, meta in runs:
            outcome = (meta.get("outcome") or {}).get("kind", "DebugLimit")
            summary = self.reports.load_summary(run_id)
            verdict = summary.verdict if summary else None
            attempts.append((run_id, outcome, verdict))
            if summary is not None:
                summaries.append(summary)

        idea = self.ideas.get(idea_id)
        session = self._pipeline_session(f"meta-{idea_id}")
        report = meta_report(
            idea_id,
            plan.id,
            attempts,
            summaries,
            session,
            self.prompts,
            idea_text=f"{idea.name}: {idea.hypothesis}",
            retry_cap=self.config.retry_cap,
        )
        self.meta_store.save(report)
        return report

    # -- status -----------------------------------------------------------------

    def usage_overview(self) -> dict:
        """Aggregate usage statistics over terminal runs (from persisted ledgers)."""
        from .gateway import CostLedger, UsageRecord, usage_summary
        from .store import read_log

        ledgers = []
        for run_id, meta in self.store.iter_run_metas():
            if meta.get("status") != RUN_STATUS_TERMINAL:
                continue
            path = self.store.ledger_path(run_id)
            records = [UsageRecord.from_dict(entry) for entry in read_log(path)]
            ledgers.append(CostLedger.from_records(run_id, records))
        return usage_summary(ledgers)

    def run_status(self, run_id: str) -> dict:
        meta = self.store.read_run_meta(run_id)
        cost = meta.get("ledger_total", 0)
        if self.gateway.has_ledger(run_id):
            cost = self.gateway.ledger(run_id).total
        iterations = meta.get("iterations", [])
        tier = iterations[-1]["tier"] if iterations else None
        last_log_lines: list[str] = []
        if iterations:
            stdout_path = self.store.iter_dir(run_id, iterations[-1]["index"]) / "stdout"
            if stdout_path.exists():
                text = stdout_path.read_bytes()[-4096:].decode("utf-8", errors="replace")
                last_log_lines = text.splitlines()[-10:]
        return {
            "run_id": run_id,
            "plan_id": meta.get("plan_id"),
            "attempt_index": meta.get("attempt_index"),
            "status": meta.get("status"),
            "iteration": iterations[-1]["index"] if iterations else 0,
            "tier": tier,
            "cost_microdollars": cost,
            "outcome": meta.get("outcome"),
            "needs_human": meta.get("needs_human"),
            "last_log_lines": last_log_lines,
            "started_at": meta.get("started_at"),
            "ended_at": meta.get("ended_at"),
        }


def _parse_pricing(raw: dict) -> dict[str, PricingTable]:
    return {
        model: PricingTable(int(entry["input_price"]), int(entry["output_price"]))
        for model, entry in raw.items()
    }
