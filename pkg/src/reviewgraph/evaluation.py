"""Evaluation aggregation and LLM-as-judge orchestration.

Pure math lives here (win rates, average ranks, NDCG@k) next to the judge
calls that produce pairwise verdicts. Judge prompts embed one rubric
sentence per metric; pairwise judging runs position-swapped by default so a
first-slot bias cannot decide a comparison.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import DataError
from .explain import Explanation, render_explanation
from .ingest import Query
from .providers import ChatProvider

logger = logging.getLogger(__name__)

# One rubric sentence per metric, embedded verbatim in judge prompts.
GENERATION_RUBRICS: Mapping[str, str] = {
    "relevance": (
        "Is the evidence in the supplementary information highly relevant and closely "
        "aligned with the reviewers’ comments?"
    ),
    "clarity": (
        "Is the supplementary information clearly articulated and easy to understand? Does it "
        "effectively explain the reviewers’ viewpoints and the supporting arguments?"
    ),
    "criticality": (
        "Does the supplementary information provide an in-depth analysis and reflection on the "
        "reviewers’ feedback? Does it identify any limitations in the feedback and offer "
        "reasonable suggestions for improvement?"
    ),
    "novelty": (
        "Does the supplementary information present unique insights or new evidence not mentioned "
        "in the original review, thereby enriching the depth and breadth of the content?"
    ),
    "persuasiveness": (
        "Does the summary present the evidence in a compelling manner, demonstrating logical "
        "reasoning and effectively persuading the reviews of the core ideas with clarity and coherence?"
    ),
    "practicality": "Does the supplementary information provide direct assistance to the author?",
}

RETRIEVAL_RUBRICS: Mapping[str, str] = {
    "relevance": (
        "How closely does the retrieved information relate to the topic of the paper review or "
        "the content of the paper?"
    ),
    "specificity": (
        "Is the retrieved information detailed and specific? Can it effectively supplement the "
        "review content or provide new insights?"
    ),
    "novelty": (
        "Does the retrieved information offer a new perspective or provide supportive evidence "
        "not mentioned in the review?"
    ),
    "logic": (
        "Is the retrieved information consistent with the review content and the overall logic "
        "of the paper?"
    ),
    "explainability": (
        "Can it effectively address the issues mentioned in the review or provide theoretical "
        "foundations or case studies to back up the review’s arguments?"
    ),
}

PAIRWISE_METRICS = ("relevance", "clarity", "criticality", "novelty")
HUMAN_METRICS = ("relevance", "clarity", "criticality", "novelty", "persuasiveness", "practicality")


@dataclass(frozen=True)
class PairwiseJudgment:
    query_id: str
    metric: str
    method_a: str
    method_b: str
    winner: str  # "a" | "b" | "tie"

    def __post_init__(self):
        if self.method_a == self.method_b:
            raise DataError("pairwise judgment needs two distinct methods")
        if self.winner not in ("a", "b", "tie"):
            raise DataError(f"invalid winner: {self.winner}")


@dataclass(frozen=True)
class WinRate:
    rate: float
    wins_a: int
    wins_b: int
    ties: int


@dataclass(frozen=True)
class RankingRecord:
    query_id: str
    metric: str
    ranks: Mapping[str, float]


@dataclass(frozen=True)
class GradedRanking:
    query_id: str
    ordered_grades: tuple[float, ...]


# ---------------------------------------------------------------------------
# Aggregation math
# ---------------------------------------------------------------------------


def win_rate(judgments: Iterable[PairwiseJudgment], a: str, b: str, metric: str) -> WinRate:
    """Fraction of decisive judgments between a and b that a wins; ties dropped."""
    wins_a = wins_b = ties = 0
    for j in judgments:
        if j.metric != metric or {j.method_a, j.method_b} != {a, b}:
            continue
        if j.winner == "tie":
            ties += 1
        elif (j.winner == "a") == (j.method_a == a):
            wins_a += 1
        else:
            wins_b += 1
    decisive = wins_a + wins_b
    if decisive == 0:
        raise DataError(f"no decisive judgments for {a} vs {b} on {metric}")
    # Computing the minority side as 1 - majority/decisive keeps
    # win_rate(a,b) + win_rate(b,a) == 1.0 exactly in floating point.
    if wins_a >= wins_b:
        rate = wins_a / decisive
    else:
        rate = 1.0 - (wins_b / decisive)
    return WinRate(rate=rate, wins_a=wins_a, wins_b=wins_b, ties=ties)


def average_rank(records: Sequence[RankingRecord], method: str) -> float:
    """Arithmetic mean of the method's rank over all records (metrics pooled)."""
    if not records:
        raise DataError("no ranking records")
    values = []
    for record in records:
        if method not in record.ranks:
            raise DataError(f"method {method!r} missing from record {record.query_id}/{record.metric}")
        values.append(float(record.ranks[method]))
    return sum(values) / len(values)


def ranks_are_valid(record: RankingRecord) -> bool:
    """True when ranks form a 1..M competition ranking (ties share a rank)."""
    values = sorted(record.ranks.values())
    position = 0
    while position < len(values):
        tied = sum(1 for v in values if v == values[position])
        if values[position] != position + 1:
            return False
        position += tied
    return True


def ndcg_at_k(ranking: GradedRanking, k: int) -> float:
    """Normalized discounted cumulative gain at cutoff k with 2^grade - 1 gains."""
    if k < 1:
        raise DataError("k must be >= 1")
    grades = ranking.ordered_grades
    if not grades:
        raise DataError("empty graded ranking")
    if any(g < 0 for g in grades):
        raise DataError("grades must be non-negative")

    def dcg(ordered: Sequence[float]) -> float:
        return sum((2.0 ** g - 1.0) / math.log2(i + 2) for i, g in enumerate(ordered[:k]))

    ideal = dcg(sorted(grades, reverse=True))
    if ideal == 0.0:
        return 0.0
    return dcg(grades) / ideal


# ---------------------------------------------------------------------------
# Judge calls
# ---------------------------------------------------------------------------

_PAIRWISE_PROMPT = """You are judging two candidate explanations of a peer-review comment.

Metric: {metric}
{rubric}

<REVIEW COMMENT>
{query}
</REVIEW COMMENT>

Response A:
{a}

Response B:
{b}

Which response is better on this metric? Answer with a single word: A, B, or TIE."""

_DIRECT_PROMPT = """You are scoring retrieved supporting content for a peer-review comment.

Metric: {metric}
{rubric}

<REVIEW COMMENT>
{query}
</REVIEW COMMENT>

Retrieved content:
{content}

Rate the retrieved content on this metric with a single integer from 1 to 10."""


def _fill(template: str, values: Mapping[str, str]) -> str:
    for key, value in values.items():
        template = template.replace("{" + key + "}", value)
    return template


def _parse_verdict(reply: str) -> str | None:
    text = reply.strip()
    match = re.match(r"^\W*(A|B|TIE)\b", text, re.IGNORECASE)
    if match:
        return match.group(1).upper()
    if re.search(r"\bTIE\b", text, re.IGNORECASE):
        return "TIE"
    letters = re.findall(r"\b([AB])\b", text)
    return letters[0] if letters else None


def judge_pairwise(
    query: Query,
    out_a: Explanation,
    out_b: Explanation,
    metric: str,
    chat: ChatProvider,
    *,
    method_a: str = "method_a",
    method_b: str = "method_b",
    swap: bool = True,
) -> PairwiseJudgment:
    """Pairwise verdict with position-swap symmetrization.

    Two judge calls are made, A-first and B-first; agreement decides the
    winner and disagreement is a tie, so a positional bias cannot win. With
    one unparsable verdict the other stands alone; both unparsable is an
    error. ``swap=False`` trusts the single A-first call.
    """
    rubric = GENERATION_RUBRICS.get(metric)
    if rubric is None:
        raise DataError(f"unknown pairwise metric: {metric}")
    if not out_a.summary or not out_b.summary:
        raise DataError("both explanations must be non-empty")

    text_a = render_explanation(out_a)
    text_b = render_explanation(out_b)

    def ask(first: str, second: str) -> str | None:
        prompt = _fill(
            _PAIRWISE_PROMPT,
            {"metric": metric, "rubric": rubric, "query": query.text, "a": first, "b": second},
        )
        return _parse_verdict(chat.chat(prompt))

    verdict_ab = ask(text_a, text_b)
    if not swap:
        if verdict_ab is None:
            raise DataError("unparsable judge verdict")
        winner = {"A": "a", "B": "b", "TIE": "tie"}[verdict_ab]
        return PairwiseJudgment(query.query_id, metric, method_a, method_b, winner)

    verdict_ba = ask(text_b, text_a)
    as_ab = {"A": "a", "B": "b", "TIE": "tie"}
    as_ba = {"A": "b", "B": "a", "TIE": "tie"}
    first = as_ab.get(verdict_ab) if verdict_ab else None
    second = as_ba.get(verdict_ba) if verdict_ba else None
    if first is None and second is None:
        raise DataError("unparsable judge verdict")
    if first is None:
        winner = second
    elif second is None:
        winner = first
    else:
        winner = first if first == second else "tie"
    return PairwiseJudgment(query.query_id, metric, method_a, method_b, winner)


def judge_direct(query: Query, content: str, metric: str, chat: ChatProvider) -> int:
    """1-10 quality score for retrieved content on one retrieval metric."""
    rubric = RETRIEVAL_RUBRICS.get(metric)
    if rubric is None:
        raise DataError(f"unknown retrieval metric: {metric}")
    prompt = _fill(
        _DIRECT_PROMPT,
        {"metric": metric, "rubric": rubric, "query": query.text, "content": content},
    )
    reply = chat.chat(prompt)
    match = re.search(r"\b(10|[1-9])\b", reply)
    if not match:
        raise DataError(f"unparsable score reply: {reply[:80]!r}")
    return int(match.group(1))


def win_rate_matrix(
    judgments: Sequence[PairwiseJudgment],
    methods: Sequence[str],
    metric: str,
) -> dict[str, dict[str, WinRate | None]]:
    """Win rate of each row method over each column method; None when undecided."""
    matrix: dict[str, dict[str, WinRate | None]] = {}
    for row in methods:
        matrix[row] = {}
        for col in methods:
            if row == col:
                matrix[row][col] = None
                continue
            try:
                matrix[row][col] = win_rate(judgments, row, col, metric)
            except DataError:
                matrix[row][col] = None
    return matrix
