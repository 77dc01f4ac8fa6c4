"""Command-line front end.

Every subcommand accepts --root (storage root) and --scenario (scripted
provider file) so the whole pipeline runs offline and deterministically.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import yaml

from ..config import load_config
from ..engine import Engine
from ..errors import EngineError
from ..gateway import BudgetPolicy, format_microdollars
from ..ideation import HumanAnnotation
from ..meta import Novelty, ReviewRating, Soundness
from .scheduler import JobSpec, Scheduler


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labloop", description=__doc__)
    parser.add_argument("--root", default="workspace", help="storage root directory")
    parser.add_argument("--config", default=None, help="engine config YAML")
    parser.add_argument("--scenario", default=None, help="scripted provider scenario file")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="ingest papers and codeblocks")
    p_ingest.add_argument("--papers", nargs="*", default=[], help="paper text files or dirs")
    p_ingest.add_argument("--codeblocks", nargs="*", default=[], help="codeblock files or dirs")

    p_ideate = sub.add_parser("ideate", help="generate ideas from sampled paper pairs")
    p_ideate.add_argument("--pairs", type=int, required=True)
    p_ideate.add_argument("--seed", type=int, default=0)
    p_ideate.add_argument("--per-pair", type=int, default=1)

    p_triage = sub.add_parser("triage", help="export the triage queue / import annotations")
    p_triage.add_argument("action", choices=["export", "import"])
    p_triage.add_argument("--file", required=True)
    p_triage.add_argument("--strata-key", default="operator", choices=["operator", "source-pair"])
    p_triage.add_argument("--per-stratum", type=int, default=10)
    p_triage.add_argument("--dedup-threshold", type=float, default=None)

    p_plan = sub.add_parser("plan", help="plan one annotated idea")
    p_plan.add_argument("--idea", required=True)

    p_run = sub.add_parser("run", help="run N builder attempts for a plan")
    p_run.add_argument("--plan", required=True)
    p_run.add_argument("--attempts", type=int, default=5)
    p_run.add_argument("--concurrency", type=int, default=4)
    p_run.add_argument("--max-debug-iterations", type=int, default=None)
    p_run.add_argument("--total-cost-limit", type=int, default=None, help="micro-dollars")
    p_run.add_argument("--iteration-cost-limit", type=int, default=None, help="micro-dollars")
    p_run.add_argument("--execution-time-limit", type=float, default=None, help="seconds")
    p_run.add_argument("--hard-time-limit", type=float, default=None, help="seconds")

    p_report = sub.add_parser("report", help="show or render a run's report")
    p_report.add_argument("--run", required=True)
    p_report.add_argument("--render", action="store_true")

    p_meta = sub.add_parser("meta", help="meta-analysis over a finished idea")
    p_meta.add_argument("--idea", required=True)

    p_review = sub.add_parser("review", help="submit external ratings / internal veto")
    p_review.add_argument("--discovery", required=True)
    p_review.add_argument("--ratings", default=None, help="YAML/JSON file with ratings")
    p_review.add_argument("--veto", choices=["pass", "fail"], default=None)
    p_review.add_argument("--notes", default="")

    p_serve = sub.add_parser("serve", help="start the HTTP API")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8080)

    return parser


def make_engine(args) -> Engine:
    config = load_config(args.config, root=args.root)
    if args.scenario:
        config = dataclasses.replace(config, scenario_path=Path(args.scenario))
    return Engine(config)


def _expand(paths: list[str], suffix: str) -> list[Path]:
    out: list[Path] = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            out.extend(sorted(path.glob(f"*{suffix}")))
        else:
            out.append(path)
    return out


def _policy_from_args(args) -> BudgetPolicy:
    defaults = BudgetPolicy()
    return BudgetPolicy(
        total_cost_limit=args.total_cost_limit or defaults.total_cost_limit,
        llm_cost_limit_per_iteration=args.iteration_cost_limit
        or defaults.llm_cost_limit_per_iteration,
        max_debug_iterations=args.max_debug_iterations or defaults.max_debug_iterations,
        execution_time_limit_per_iteration=args.execution_time_limit
        or defaults.execution_time_limit_per_iteration,
        hard_time_limit=args.hard_time_limit or defaults.hard_time_limit,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    engine = make_engine(args)
    try:
        if args.command == "ingest":
            for path in _expand(args.papers, ".txt"):
                record = engine.ingest_paper_file(path)
                print(f"paper {record.id}  {record.title}")
            for path in _expand(args.codeblocks, ".block"):
                block = engine.ingest_codeblock_file(path)
                print(f"codeblock {block.id}  {block.name}")
            return 0

        if args.command == "ideate":
            ideas = engine.ideate(args.pairs, args.seed, per_pair=args.per_pair)
            print(f"generated {len(ideas)} ideas")
            return 0

        if args.command == "triage":
            if args.action == "export":
                queue = engine.triage_queue(
                    args.strata_key, args.per_stratum, args.dedup_threshold
                )
                cards = [
                    {
                        "idea_id": idea.id,
                        "name": idea.name,
                        "hypothesis": idea.hypothesis,
                        "operator": idea.operator.value,
                        "rating": "unreviewed",
                        "notes": "",
                        "conditioning_text": "",
                    }
                    for idea in queue
                ]
                Path(args.file).write_text(yaml.safe_dump(cards, sort_keys=False), "utf-8")
                print(f"exported {len(cards)} ideas to {args.file}")
            else:
                entries = yaml.safe_load(Path(args.file).read_text(encoding="utf-8")) or []
                imported = 0
                for entry in entries:
                    engine.annotate(
                        HumanAnnotation(
                            idea_id=entry["idea_id"],
                            rating=entry.get("rating", "unreviewed"),
                            notes=entry.get("notes", ""),
                            conditioning_text=entry.get("conditioning_text", ""),
                        )
                    )
                    imported += 1
                print(f"imported {imported} annotations")
            return 0

        if args.command == "plan":
            plan = engine.plan_idea(args.idea)
            print(f"plan {plan.id} tiers={[tier.name for tier in plan.tiers]}")
            return 0

        if args.command == "run":
            scheduler = Scheduler(engine, concurrency_cap=args.concurrency)
            job = JobSpec(
                plan_id=args.plan,
                attempts=args.attempts,
                policy=_policy_from_args(args),
                concurrency_cap=args.concurrency,
            )
            run_ids = scheduler.enqueue(job)
            scheduler.wait_all()
            scheduler.shutdown()
            for run_id in run_ids:
                status = engine.run_status(run_id)
                outcome = (status.get("outcome") or {}).get("kind")
                print(
                    f"run {run_id}  outcome={outcome}  "
                    f"cost={format_microdollars(status['cost_microdollars'])}"
                )
            return 0

        if args.command == "report":
            report = engine.reports.load_report(args.run)
            if report is None:
                print(f"error: no report for run {args.run}", file=sys.stderr)
                return 1
            if args.render:
                ok, detail = engine.reports.render(report)
                print(f"rendered: {detail}" if ok else f"render failed: {detail}")
            else:
                print(report.document)
            return 0

        if args.command == "meta":
            report = engine.build_meta(args.idea)
            print(f"classification: {report.classification}")
            for run_id, outcome, verdict in report.attempt_summaries:
                print(f"  {run_id}: {outcome} / {verdict or 'n/a'}")
            return 0

        if args.command == "review":
            if args.ratings:
                raw = yaml.safe_load(Path(args.ratings).read_text(encoding="utf-8")) or []
                ratings = [
                    ReviewRating(
                        reviewer_id=entry["reviewer_id"],
                        soundness=Soundness(entry["soundness"]),
                        novelty=Novelty(entry["novelty"]),
                        justification=entry.get("justification", ""),
                    )
                    for entry in raw
                ]
                decision = engine.reviews.add_ratings(args.discovery, ratings)
                print(json.dumps(decision.to_dict()))
            if args.veto is not None:
                decision = engine.reviews.set_internal(
                    args.discovery, args.veto == "pass", args.notes
                )
                print(json.dumps(decision.to_dict()))
            return 0

        if args.command == "serve":
            import uvicorn

            from .api import create_app

            engine.recover()
            app = create_app(engine)
            uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
            return 0

        raise AssertionError(f"unhandled command {args.command}")
    finally:
        engine.close()


if __name__ == "__main__":
    sys.exit(main())
