"""External review binarization, the majority gate, and the internal veto.

Ratings of unsound or not-novel binarize to 0; everything above binarizes
to 1. A discovery passes external review when a strict majority of
reviewers pass it on BOTH axes, and the final decision is the conjunction
with the recorded internal (human) review.
"""

import tempfile
from pathlib import Path

from labloop.meta import (
    Novelty,
    ReviewRating,
    ReviewStore,
    Soundness,
    binarize_rating,
    classify_consistency,
    external_gate,
)
from labloop.store import Store

ratings = [
    ReviewRating("alice", Soundness.CLEARLY_SOUND, Novelty.INCREMENTAL_SIGNIFICANT),
    ReviewRating("bo", Soundness.LIKELY_SOUND, Novelty.INCREMENTAL_MINOR),
    ReviewRating("chris", Soundness.UNSOUND, Novelty.INCREMENTAL_MINOR),
]
print("binarized ratings (soundness_bit, novelty_bit):")
for rating in ratings:
    print(f"  {rating.reviewer_id}: {rating.soundness.value}/{rating.novelty.value} -> {binarize_rating(rating)}")
print(f"external gate (majority on both axes): {external_gate(ratings)}")

store = ReviewStore(Store(Path(tempfile.mkdtemp(prefix='demo-review-'))))
decision = store.add_ratings("graph-verification-agent", ratings)
print(f"\nafter external review:  external={decision.external_pass} final={decision.final}")

decision = store.set_internal("graph-verification-agent", passed=True, notes="replicated")
print(f"after internal pass:    external={decision.external_pass} final={decision.final}")

decision = store.set_internal(
    "graph-verification-agent",
    passed=False,
    notes="Code inspection: the agent builds the graph but never reads it.",
)
print(f"after internal veto:    external={decision.external_pass} final={decision.final}")

print("\nconsistency classification across five attempts:")
cases = {
    "supports x4 + inconclusive": [(True, "supports")] * 4 + [(True, "inconclusive")],
    "supports x2 + 3 failures": [(True, "supports")] * 2 + [(False, None)] * 3,
    "supports x3 + rejects x2": [(True, "supports")] * 3 + [(True, "rejects")] * 2,
}
for label, attempts in cases.items():
    print(f"  {label}: {classify_consistency(attempts)}")
