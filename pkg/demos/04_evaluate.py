"""
Evaluation aggregation
======================

Win rates from pairwise judgments, average ranks, and NDCG@k, plus a
position-symmetrized judge call against the offline fake.
"""

from reviewgraph import (
    FakeChatProvider,
    GradedRanking,
    PairwiseJudgment,
    RankingRecord,
    average_rank,
    judge_pairwise,
    ndcg_at_k,
    win_rate,
    win_rate_matrix,
)
from reviewgraph.explain import EvidenceItem, Explanation
from reviewgraph.ingest import Query

# --- win rate: ties never count toward the denominator
judgments = (
    [PairwiseJudgment("q1", "relevance", "ours", "baseline", "a")] * 7
    + [PairwiseJudgment("q1", "relevance", "ours", "baseline", "b")] * 2
    + [PairwiseJudgment("q1", "relevance", "ours", "baseline", "tie")]
)
result = win_rate(judgments, "ours", "baseline", "relevance")
print(f"win rate ours vs baseline: {result.rate:.4f} "
      f"(wins {result.wins_a}-{result.wins_b}, ties {result.ties})")
print("complement sums to one:",
      result.rate + win_rate(judgments, "baseline", "ours", "relevance").rate)

matrix = win_rate_matrix(judgments, ["baseline", "ours"], "relevance")
print("matrix cell ours->baseline:", f"{matrix['ours']['baseline'].rate:.4f}")

# --- average rank across metrics (lower is better)
records = [
    RankingRecord("agg", metric, {"ours": value, "baseline": 5 - value})
    for metric, value in [
        ("relevance", 1.89), ("clarity", 1.97), ("criticality", 2.02),
        ("novelty", 1.95), ("practicality", 1.83), ("persuasiveness", 1.99),
    ]
]
print(f"\naverage rank ours: {average_rank(records, 'ours'):.2f}")
print(f"average rank baseline: {average_rank(records, 'baseline'):.2f}")

# --- NDCG@k measures how close a ranking is to grade-sorted order
print("\nNDCG@3 of [2,1,0] (ideal):", ndcg_at_k(GradedRanking("q", (2.0, 1.0, 0.0)), 3))
print("NDCG@3 of [1,0,2]:", round(ndcg_at_k(GradedRanking("q", (1.0, 0.0, 2.0)), 3), 4))

# --- a pairwise judge call with position swapping
query = Query("q1", "Does the method generalize?", "question", 27)


def explanation(summary):
    return Explanation("q1", (EvidenceItem(1, "4 Experiments", f"support: {summary}"),), summary)


judgment = judge_pairwise(
    query,
    explanation("Generalization is tested on two domains."),
    explanation("No transfer experiments exist."),
    "criticality",
    FakeChatProvider(profile="judge"),
    method_a="ours",
    method_b="baseline",
)
print(f"\njudge verdict on {judgment.metric}: winner={judgment.winner}")
