"""Query-driven retrieval over the document graph and the background graph.

Document-graph retrieval turns query/node similarities into a probability
distribution, samples seed nodes from it, then grows the selection along
graph edges, scoring each candidate neighbor as

    score = alpha * P(candidate) + cosine(frontier_node, candidate)

Background retrieval descends theme -> abstract -> chunk, scoring every
candidate with weighted cosine terms against the query, the pooled subgraph
representation, and its parent nodes, keeping a fixed number of winners per
level.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .background import BackgroundGraph
from .docgraph import ABSTRACT_NODE_ID, ChunkGraph
from .errors import DataError
from .providers import Vector, cosine, rectified_similarity

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetrievalConfig:
    """Knobs for document-graph retrieval."""

    k_seeds: int = 3
    iterations: int = 2
    branch: int = 2
    alpha: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.k_seeds < 1:
            raise DataError("k_seeds must be >= 1")
        if self.iterations < 0 or self.branch < 1 or self.alpha < 0:
            raise DataError("iterations >= 0, branch >= 1, alpha >= 0 required")


@dataclass(eq=False)
class Subgraph:
    """Retrieved node set in selection order, with scores and pooled mean embedding."""

    node_ids: tuple[int, ...]
    seed_ids: tuple[int, ...]
    scores: dict[int, float]
    pooled: Vector


@dataclass(frozen=True)
class HierarchicalWeights:
    """Per-level scoring weights for background retrieval (all cosine terms)."""

    theme_query: float = 1.0
    theme_subgraph: float = 1.0
    abstract_query: float = 1.0
    abstract_subgraph: float = 1.0
    abstract_theme: float = 1.0
    chunk_query: float = 1.0
    chunk_subgraph: float = 1.0
    chunk_theme: float = 1.0
    chunk_abstract: float = 1.0

    def __post_init__(self):
        values = (
            self.theme_query, self.theme_subgraph, self.abstract_query,
            self.abstract_subgraph, self.abstract_theme, self.chunk_query,
            self.chunk_subgraph, self.chunk_theme, self.chunk_abstract,
        )
        if any(v < 0 for v in values):
            raise DataError("weights must be non-negative")
        if not any(v > 0 for v in values):
            raise DataError("at least one weight must be positive")


@dataclass(frozen=True)
class ScoredTheme:
    theme_id: str
    score: float


@dataclass(frozen=True)
class ScoredAbstract:
    paper_doc_id: str
    score: float
    parent_theme_id: str


@dataclass(frozen=True)
class ScoredChunk:
    paper_doc_id: str
    node_id: int
    score: float
    parent_abstract_id: str
    parent_theme_id: str
    text: str = field(default="", compare=False)
    section_path: tuple[str, ...] = field(default=(), compare=False)


@dataclass(eq=False)
class HierarchicalSelection:
    themes: list[ScoredTheme]
    abstracts: list[ScoredAbstract]
    chunks: list[ScoredChunk]

    @property
    def merged_topk(self) -> list[ScoredChunk]:
        return self.chunks


# ---------------------------------------------------------------------------
# Document-graph retrieval
# ---------------------------------------------------------------------------


def node_distribution(graph: ChunkGraph, query_embedding: Vector) -> np.ndarray:
    """Probability of each node given the query.

    Rectified (non-negative) cosine similarities normalized to sum to one;
    when every similarity rectifies to zero the distribution is uniform, so
    the result is always a valid probability vector.
    """
    if not graph.nodes:
        raise DataError("empty graph")
    sims = np.array(
        [rectified_similarity(query_embedding, node.embedding) for node in graph.nodes],
        dtype=np.float64,
    )
    total = sims.sum()
    if total <= 0.0:
        return np.full(len(sims), 1.0 / len(sims))
    return sims / total


def _sample_distinct(probabilities: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    """k distinct indices via sequential draws with renormalization."""
    remaining = list(range(len(probabilities)))
    picks: list[int] = []
    for _ in range(min(k, len(remaining))):
        weights = np.array([probabilities[i] for i in remaining], dtype=np.float64)
        total = weights.sum()
        if total > 0.0:
            weights = weights / total
        else:
            weights = np.full(len(remaining), 1.0 / len(remaining))
        pos = int(rng.choice(len(remaining), p=weights))
        picks.append(remaining.pop(pos))
    return picks


def retrieve_subgraph(graph: ChunkGraph, query_embedding: Vector, cfg: RetrievalConfig) -> Subgraph:
    """Seeded sampling plus iterative one-hop expansion.

    Seeds are drawn without replacement from ``node_distribution``. Each
    iteration expands only the frontier (the nodes added in the previous
    step): every frontier node nominates its ``branch`` best unselected
    neighbors by the alpha-weighted score, ties to the lower node id; the
    deduplicated union becomes the next frontier. Seed scores record their
    probability, expansion scores the best score any frontier node gave them.
    """
    n = len(graph.nodes)
    if n == 0:
        raise DataError("empty graph")
    probabilities = node_distribution(graph, query_embedding)
    rng = np.random.default_rng(cfg.rng_seed)
    seeds = _sample_distinct(probabilities, cfg.k_seeds, rng)

    selected: list[int] = list(seeds)
    selected_set = set(seeds)
    scores: dict[int, float] = {i: float(probabilities[i]) for i in seeds}
    embeddings = [node.embedding for node in graph.nodes]

    frontier = list(seeds)
    for _ in range(cfg.iterations):
        additions: list[int] = []
        added_set: set[int] = set()
        for i in frontier:
            candidates = [j for j in graph.adjacency.get(i, ()) if j not in selected_set]
            ranked = sorted(
                candidates,
                key=lambda j: (-(cfg.alpha * probabilities[j] + cosine(embeddings[i], embeddings[j])), j),
            )
            for j in ranked[: cfg.branch]:
                if j not in added_set:
                    added_set.add(j)
                    additions.append(j)
        for j in additions:
            scores[j] = max(
                cfg.alpha * float(probabilities[j]) + cosine(embeddings[i], embeddings[j])
                for i in frontier
                if j in graph.adjacency.get(i, ())
            )
        selected.extend(additions)
        selected_set.update(additions)
        frontier = additions
        if not frontier:
            break

    pooled = np.mean([embeddings[i] for i in selected], axis=0)
    return Subgraph(node_ids=tuple(selected), seed_ids=tuple(seeds), scores=scores, pooled=pooled)


# ---------------------------------------------------------------------------
# Background retrieval
# ---------------------------------------------------------------------------


def retrieve_background(
    bg: BackgroundGraph,
    query_embedding: Vector,
    pooled: Vector,
    weights: HierarchicalWeights = HierarchicalWeights(),
    topk: tuple[int, int, int] = (2, 3, 5),
    *,
    prune: bool = True,
) -> HierarchicalSelection:
    """Three-level descent: themes, then their abstracts, then their chunks.

    With ``prune`` (the default) each level only considers candidates whose
    parent survived the previous level; ``prune=False`` scores every
    candidate at every level for ablation. Raw cosine is used throughout:
    these are ranking scores, not probabilities. Ordering is by score
    descending, then lower id, so results are total and deterministic.
    """
    m_themes, m_abstracts, m_chunks = topk
    if m_themes < 1 or m_abstracts < 1 or m_chunks < 1:
        raise DataError("topk values must be >= 1")
    if not bg.themes or not bg.abstracts:
        raise DataError("background graph exhausted")

    theme_order = {t.theme_id: i for i, t in enumerate(bg.themes)}
    theme_by_id = {t.theme_id: t for t in bg.themes}

    ranked_themes = sorted(
        (
            ScoredTheme(
                theme_id=t.theme_id,
                score=weights.theme_query * cosine(t.embedding, query_embedding)
                + weights.theme_subgraph * cosine(t.embedding, pooled),
            )
            for t in bg.themes
        ),
        key=lambda s: (-s.score, theme_order[s.theme_id]),
    )
    selected_themes = ranked_themes[:m_themes]
    theme_score = {s.theme_id: s.score for s in ranked_themes}
    selected_theme_ids = [s.theme_id for s in selected_themes]

    for theme_id in selected_theme_ids:
        if not bg.papers_of_theme(theme_id):
            logger.warning("theme %s has no linked abstracts; skipped", theme_id)

    parent_pool = selected_theme_ids if prune else [t.theme_id for t in bg.themes]
    abstract_candidates = []
    for abstract in bg.abstracts:
        parents = [tid for tid in bg.themes_of_paper(abstract.paper_doc_id) if tid in parent_pool]
        if not parents:
            continue
        parent = min(parents, key=lambda tid: (-theme_score[tid], theme_order[tid]))
        score = (
            weights.abstract_query * cosine(abstract.embedding, query_embedding)
            + weights.abstract_subgraph * cosine(abstract.embedding, pooled)
            + weights.abstract_theme * cosine(abstract.embedding, theme_by_id[parent].embedding)
        )
        abstract_candidates.append(ScoredAbstract(abstract.paper_doc_id, score, parent))
    ranked_abstracts = sorted(abstract_candidates, key=lambda s: (-s.score, s.paper_doc_id))
    selected_abstracts = ranked_abstracts[:m_abstracts]

    abstract_by_id = {a.paper_doc_id: a for a in bg.abstracts}
    chunk_pool = selected_abstracts if prune else ranked_abstracts
    chunk_candidates = []
    for scored_abstract in chunk_pool:
        abstract = abstract_by_id[scored_abstract.paper_doc_id]
        theme_embedding = theme_by_id[scored_abstract.parent_theme_id].embedding
        child = bg.child_graphs.get(abstract.paper_doc_id)
        if child is None:
            continue
        for node in child.nodes:
            if node.node_id == ABSTRACT_NODE_ID:
                continue  # the abstract already competes at its own level
            score = (
                weights.chunk_query * cosine(node.embedding, query_embedding)
                + weights.chunk_subgraph * cosine(node.embedding, pooled)
                + weights.chunk_theme * cosine(node.embedding, theme_embedding)
                + weights.chunk_abstract * cosine(node.embedding, abstract.embedding)
            )
            chunk_candidates.append(
                ScoredChunk(
                    paper_doc_id=abstract.paper_doc_id,
                    node_id=node.node_id,
                    score=score,
                    parent_abstract_id=abstract.paper_doc_id,
                    parent_theme_id=scored_abstract.parent_theme_id,
                    text=node.text,
                    section_path=node.section_path,
                )
            )
    ranked_chunks = sorted(chunk_candidates, key=lambda s: (-s.score, s.paper_doc_id, s.node_id))
    selected_chunks = ranked_chunks[:m_chunks]
    if not selected_chunks:
        raise DataError("background graph exhausted")

    return HierarchicalSelection(
        themes=list(selected_themes),
        abstracts=list(selected_abstracts),
        chunks=selected_chunks,
    )
