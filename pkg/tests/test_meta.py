"""Meta-analysis rules and the review gate, checked against brute-force oracles."""

from __future__ import annotations

import itertools
import time

import pytest

from labloop.errors import ValidationError
from labloop.gateway import BudgetPolicy, Gateway, PricingTable
from labloop.meta import (
    CLASS_CONSISTENT,
    CLASS_LIMITED,
    CLASS_MIXED,
    MetaStore,
    Novelty,
    ReviewRating,
    ReviewStore,
    Soundness,
    binarize_rating,
    classify_consistency,
    external_gate,
    meta_report,
)
from labloop.providers import ScriptedProvider
from labloop.reporting import ResultSummary
from labloop.store import Store

from conftest import response, rule


def rating(soundness: Soundness, novelty: Novelty, reviewer: str = "r1") -> ReviewRating:
    return ReviewRating(reviewer_id=reviewer, soundness=soundness, novelty=novelty)


# -- consistency classifier ----------------------------------------------------------


def test_four_of_five_same_verdict_is_consistent():
    attempts = [(True, "supports")] * 4 + [(True, "inconclusive")]
    assert classify_consistency(attempts) == CLASS_CONSISTENT


def test_two_of_five_completed_is_limited():
    attempts = [(True, "supports")] * 2 + [(False, None)] * 3
    assert classify_consistency(attempts) == CLASS_LIMITED


def test_three_two_split_is_mixed():
    attempts = [(True, "supports")] * 3 + [(True, "rejects")] * 2
    assert classify_consistency(attempts) == CLASS_MIXED


def test_single_completed_attempt_is_consistent():
    assert classify_consistency([(True, "supports")]) == CLASS_CONSISTENT


def test_four_agree_one_failed_is_consistent():
    attempts = [(True, "supports")] * 4 + [(False, None)]
    assert classify_consistency(attempts) == CLASS_CONSISTENT


def test_empty_attempts_rejected():
    with pytest.raises(ValidationError):
        classify_consistency([])


def oracle_classify(attempts) -> str:
    """Independent brute-force reading of the three rules, integer arithmetic."""
    n = len(attempts)
    completed = 0
    for done, _verdict in attempts:
        if done:
            completed += 1
    if completed * 100 <= 40 * n:
        return CLASS_LIMITED
    best_agree = 0
    for kind in ("supports", "rejects", "inconclusive"):
        agree = 0
        for done, verdict in attempts:
            if done and verdict == kind:
                agree += 1
        best_agree = max(best_agree, agree)
    if best_agree * 100 >= 80 * n:
        return CLASS_CONSISTENT
    return CLASS_MIXED


def test_exhaustive_agreement_with_oracle_n5():
    started = time.monotonic()
    states = ["supports", "rejects", "inconclusive", "failed"]
    disagreements = []
    for assignment in itertools.product(states, repeat=5):
        attempts = [
            (state != "failed", None if state == "failed" else state) for state in assignment
        ]
        got = classify_consistency(attempts)
        want = oracle_classify(attempts)
        if got != want:
            disagreements.append((assignment, got, want))
    assert disagreements == []
    assert time.monotonic() - started < 1.0


# -- binarization ------------------------------------------------------------------


def test_unsound_with_minor_novelty_bits():
    assert binarize_rating(rating(Soundness.UNSOUND, Novelty.INCREMENTAL_MINOR)) == (0, 1)


def test_minor_concerns_not_novel_bits():
    assert binarize_rating(rating(Soundness.MINOR_CONCERNS, Novelty.NOT_NOVEL)) == (1, 0)


def test_clearly_sound_highly_novel_bits():
    assert binarize_rating(rating(Soundness.CLEARLY_SOUND, Novelty.HIGHLY_NOVEL)) == (1, 1)


def test_all_soundness_levels_above_unsound_pass():
    for level in (Soundness.CLEARLY_SOUND, Soundness.LIKELY_SOUND, Soundness.MINOR_CONCERNS):
        assert binarize_rating(rating(level, Novelty.NOT_NOVEL))[0] == 1
    assert binarize_rating(rating(Soundness.UNSOUND, Novelty.NOT_NOVEL))[0] == 0


# -- external gate -----------------------------------------------------------------


def bits_to_ratings(bit_pairs):
    soundness = {0: Soundness.UNSOUND, 1: Soundness.LIKELY_SOUND}
    novelty = {0: Novelty.NOT_NOVEL, 1: Novelty.INCREMENTAL_MINOR}
    return [
        ReviewRating(reviewer_id=f"r{i}", soundness=soundness[s], novelty=novelty[v])
        for i, (s, v) in enumerate(bit_pairs)
    ]


def test_two_of_three_majority_passes():
    assert external_gate(bits_to_ratings([(1, 1), (1, 1), (0, 1)])) is True


def test_one_third_soundness_fails():
    assert external_gate(bits_to_ratings([(1, 1), (0, 1), (0, 0)])) is False


def test_unanimous_passes():
    assert external_gate(bits_to_ratings([(1, 1), (1, 1), (1, 1)])) is True


def test_even_split_tie_fails():
    assert external_gate(bits_to_ratings([(1, 1), (0, 0)])) is False


def test_flipping_any_zero_bit_never_unpasses():
    for bit_pairs in itertools.product([(0, 0), (0, 1), (1, 0), (1, 1)], repeat=3):
        before = external_gate(bits_to_ratings(list(bit_pairs)))
        for index in range(3):
            for axis in range(2):
                flipped = [list(p) for p in bit_pairs]
                if flipped[index][axis] == 0:
                    flipped[index][axis] = 1
                    after = external_gate(bits_to_ratings([tuple(p) for p in flipped]))
                    assert after >= before  # 0->1 never turns pass into fail


# -- meta_report composition ----------------------------------------------------------


def summaries_for(verdicts):
    return [
        ResultSummary(run_id=f"run-{i}", text=f"attempt {i}", verdict=v)
        for i, v in enumerate(verdicts)
    ]


def session_for(scenario):
    gateway = Gateway(ScriptedProvider(scenario), {"m": PricingTable(150_000, 600_000)})
    return gateway.session("meta-idea", "m", policy=BudgetPolicy())


@pytest.fixture
def prompts(tmp_path):
    from labloop.prompts import PromptLibrary

    library = PromptLibrary(tmp_path / "prompts")
    library.scaffold_defaults()
    return library


def test_meta_report_consistent_with_narrative(prompts):
    attempts = [(f"run-{i}", "Completed", "supports") for i in range(4)]
    attempts.append(("run-4", "Completed", "inconclusive"))
    session = session_for({"rules": [rule(responses=[response("All attempts point one way.")])]})
    report = meta_report(
        "idea-1", "plan-1", attempts, summaries_for(["supports"] * 4 + ["inconclusive"]),
        session, prompts,
    )
    assert report.classification == CLASS_CONSISTENT
    assert report.narrative == "All attempts point one way."
    assert len(report.attempt_summaries) == 5


def test_meta_report_n1_boundary(prompts):
    session = session_for({"rules": [rule(responses=[response("One clean attempt.")])]})
    report = meta_report(
        "idea-1", "plan-1", [("run-0", "Completed", "supports")],
        summaries_for(["supports"]), session, prompts,
    )
    assert report.classification == CLASS_CONSISTENT


def test_meta_report_narrative_failure_keeps_classification(prompts):
    attempts = [(f"run-{i}", "Completed", "supports") for i in range(5)]
    session = session_for({"rules": []})  # provider has nothing -> transport error
    report = meta_report(
        "idea-1", "plan-1", attempts, summaries_for(["supports"] * 5), session, prompts
    )
    assert report.classification == CLASS_CONSISTENT
    assert report.narrative == ""
    assert report.warnings


def test_meta_store_round_trip(tmp_path, prompts):
    store = MetaStore(Store(tmp_path))
    attempts = [("run-0", "Completed", "supports"), ("run-1", "DebugLimit", None)]
    report = meta_report("idea-9", "plan-9", attempts, [], None, None)
    store.save(report)
    loaded = store.load("idea-9")
    assert loaded.classification == report.classification
    assert loaded.attempt_summaries == attempts


# -- review store -------------------------------------------------------------------


def test_review_store_gate_flow(tmp_path):
    reviews = ReviewStore(Store(tmp_path))
    decision = reviews.add_ratings("disc-1", bits_to_ratings([(1, 1), (1, 1), (0, 1)]))
    assert decision.external_pass is True
    assert decision.internal_pass is False  # veto not yet recorded
    assert decision.final is False

    decision = reviews.set_internal("disc-1", True, notes="replicated at 3x samples")
    assert decision.final is True

    decision = reviews.set_internal("disc-1", False, notes="code never uses the graph")
    assert decision.external_pass is True
    assert decision.final is False  # veto overrides


def test_gate_persisted_and_reloadable(tmp_path):
    reviews = ReviewStore(Store(tmp_path))
    reviews.add_ratings("disc-2", bits_to_ratings([(1, 1), (1, 1), (1, 1)]))
    reviews.set_internal("disc-2", True)
    again = ReviewStore(Store(tmp_path))
    decision = again.gate("disc-2")
    assert decision.final is True
    assert [r.reviewer_id for r in again.ratings("disc-2")] == ["r0", "r1", "r2"]
