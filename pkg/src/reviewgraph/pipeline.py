"""End-to-end orchestration: ingest, build, retrieve, explain, evaluate.

Every artifact these functions write embeds the full config snapshot and
sha256 hashes of its inputs, and the writers are deterministic: re-running a
step with unchanged inputs (and offline providers) reproduces the same bytes.
The run summary is the one log-like output that carries wall-clock timing.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .background import (
    BackgroundGraph,
    LocalPaperSource,
    build_background_graph,
    identify_cited,
    load_background,
    save_background,
    SOURCE_CITED,
    SOURCE_COMPLEMENTARY,
)
from .chunking import chunk_document, document_sentences
from .config import PipelineConfig
from .docgraph import ChunkGraph, build_graph, graph_outline, load_graph, save_graph
from .errors import DataError, ProviderError, UsageError
from .explain import assemble_prompt, generate_explanation, parse_explanation
from .ingest import (
    Corpus,
    Query,
    Reference,
    Section,
    SourceDocument,
    extract_review_comments,
    load_corpus,
)
from .providers import (
    CachedEmbedder,
    ChatProvider,
    EmbeddingProvider,
    FakeChatProvider,
    HashEmbedder,
    HttpChatClient,
    HttpEmbeddingClient,
)
from .retrieval import (
    HierarchicalSelection,
    Subgraph,
    retrieve_background,
    retrieve_subgraph,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Small helpers
# ---------------------------------------------------------------------------


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_json(path: str | Path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


def read_json(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON in {path}: {exc}") from exc


def make_providers(
    config: PipelineConfig,
    fake: bool,
    cache_dir: str | Path | None = None,
) -> tuple[EmbeddingProvider, ChatProvider]:
    """Build the (embedder, chat) pair; fake mode needs no network and no keys."""
    if fake:
        embedder: EmbeddingProvider = HashEmbedder(dim=config.fake_dim)
        chat: ChatProvider = FakeChatProvider(profile="auto")
    else:
        if config.embedding_provider is None or config.chat_provider is None:
            raise UsageError("real providers require embedding_provider and chat_provider config")
        embedder = HttpEmbeddingClient(config.embedding_provider)
        chat = HttpChatClient(config.chat_provider)
    return CachedEmbedder(embedder, cache_dir), chat


# ---------------------------------------------------------------------------
# Corpus artifact
# ---------------------------------------------------------------------------


def document_to_dict(doc: SourceDocument) -> dict:
    return {
        "doc_id": doc.doc_id,
        "title": doc.title,
        "abstract": doc.abstract_text,
        "sections": [{"heading": s.heading, "level": s.level, "body": s.body} for s in doc.sections],
        "references": [{"raw": r.raw_entry, "title": r.title, "year": r.year} for r in doc.references],
    }


def document_from_dict(payload: dict) -> SourceDocument:
    try:
        return SourceDocument(
            doc_id=payload["doc_id"],
            title=payload["title"],
            abstract_text=payload["abstract"],
            sections=tuple(
                Section(heading=s["heading"], level=int(s["level"]), body=s["body"])
                for s in payload["sections"]
            ),
            references=tuple(
                Reference(raw_entry=r["raw"], title=r.get("title"), year=r.get("year"))
                for r in payload["references"]
            ),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed document payload: {exc}") from exc


def run_ingest(manifest_path: str | Path, out_dir: str | Path, config: PipelineConfig) -> Path:
    """Parse the corpus named by the manifest and write corpus.json."""
    manifest_path = Path(manifest_path)
    corpus = load_corpus(manifest_path)
    manifest = read_json(manifest_path)
    inputs = {"manifest": sha256_file(manifest_path)}
    base = manifest_path.parent
    for rel in [manifest["reviewed"], *manifest.get("related", []), *manifest.get("reviews", [])]:
        inputs[rel] = sha256_file(base / rel)
    out_path = Path(out_dir) / "corpus.json"
    write_json(
        out_path,
        {
            "config": config.to_dict(),
            "inputs": inputs,
            "reviewed": document_to_dict(corpus.reviewed_paper),
            "related": [document_to_dict(d) for d in corpus.related_papers],
            "reviews": corpus.reviews,
        },
    )
    return out_path


def load_corpus_artifact(path: str | Path) -> Corpus:
    payload = read_json(path)
    try:
        return Corpus(
            reviewed_paper=document_from_dict(payload["reviewed"]),
            related_papers=[document_from_dict(d) for d in payload["related"]],
            reviews=list(payload["reviews"]),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed corpus artifact {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Graph building
# ---------------------------------------------------------------------------


def build_reviewed_graph(corpus: Corpus, config: PipelineConfig, embedder: EmbeddingProvider) -> ChunkGraph:
    doc = corpus.reviewed_paper
    sentences = document_sentences(doc)
    chunks = chunk_document(sentences, config.chunking(), embedder)
    return build_graph(doc.abstract_text, chunks, config.theta2, embedder, doc_id=doc.doc_id)


def run_build(
    corpus_path: str | Path,
    out_dir: str | Path,
    config: PipelineConfig,
    *,
    fake: bool = True,
) -> tuple[Path, Path]:
    """Build the reviewed-paper graph and the background graph; write artifacts."""
    corpus = load_corpus_artifact(corpus_path)
    embedder, chat = make_providers(config, fake)
    graphs_dir = Path(out_dir) / "graphs"
    graphs_dir.mkdir(parents=True, exist_ok=True)

    reviewed_graph = build_reviewed_graph(corpus, config, embedder)
    smg_path = graphs_dir / "smg_reviewed.json"
    save_graph(reviewed_graph, smg_path)

    if not corpus.related_papers:
        raise DataError("corpus has no related papers; cannot build the background graph")
    cited_ids = identify_cited(corpus.reviewed_paper, corpus.related_papers)
    sources = {
        doc.doc_id: (SOURCE_CITED if doc.doc_id in cited_ids else SOURCE_COMPLEMENTARY)
        for doc in corpus.related_papers
    }
    for doc_id, source in sources.items():
        if source == SOURCE_COMPLEMENTARY:
            logger.warning("related paper %s not found in related-work text; tagged complementary", doc_id)

    paper_source = None
    if config.paper_source_index:
        paper_source = LocalPaperSource(config.paper_source_index)
    background = build_background_graph(
        corpus.related_papers,
        chat,
        embedder,
        config.chunking(),
        config.theta2,
        sources=sources,
        paper_source=paper_source,
        per_theme=config.per_theme if paper_source is not None else 0,
        max_themes=config.max_themes,
        jobs=config.jobs,
    )
    hbg_path = graphs_dir / "hbg.json"
    save_background(background, hbg_path)

    write_json(
        graphs_dir / "build_manifest.json",
        {
            "config": config.to_dict(),
            "inputs": {"corpus": sha256_file(corpus_path)},
            "reviewed_doc_id": corpus.reviewed_paper.doc_id,
            "reviewed_graph": {"nodes": len(reviewed_graph.nodes), "edges": len(reviewed_graph.edges)},
            "background": {
                "themes": len(background.themes),
                "abstracts": len(background.abstracts),
                "links": len(background.theme_links),
            },
        },
    )
    return smg_path, hbg_path


# ---------------------------------------------------------------------------
# Evidence linearization
# ---------------------------------------------------------------------------


def _lines_within(lines: list[str], budget: int) -> str:
    kept: list[str] = []
    total = 0
    for line in lines:
        extra = len(line) + (1 if kept else 0)
        if total + extra > budget:
            if not kept:
                return line[:budget]
            break
        kept.append(line)
        total += extra
    return "\n".join(kept)


def subgraph_evidence(graph: ChunkGraph, subgraph: Subgraph, budget: int) -> str:
    """Retrieved document excerpts, best score first, within the character budget."""
    ordered = sorted(subgraph.node_ids, key=lambda i: (-subgraph.scores[i], i))
    lines = [graph_outline(graph, [node_id]) for node_id in ordered]
    return _lines_within(lines, budget)


def background_evidence(bg: BackgroundGraph, selection: HierarchicalSelection, budget: int) -> str:
    """Themes, abstracts, and chunk excerpts from the background selection."""
    title_by_id = {a.paper_doc_id: a.title for a in bg.abstracts}
    abstract_by_id = {a.paper_doc_id: a.abstract_text for a in bg.abstracts}
    description_by_id = {t.theme_id: t.description for t in bg.themes}
    lines = []
    for theme in selection.themes:
        lines.append(f"- Theme: {description_by_id[theme.theme_id]}")
    for abstract in selection.abstracts:
        lines.append(f"- {title_by_id[abstract.paper_doc_id]}: {abstract_by_id[abstract.paper_doc_id]}")
    for chunk in selection.chunks:
        location = " ".join(chunk.section_path) if chunk.section_path else "Document"
        lines.append(
            f"- {chunk.text} (excerpt from {title_by_id[chunk.paper_doc_id]}: {location})"
        )
    return _lines_within(lines, budget)


# ---------------------------------------------------------------------------
# Retrieval and explanation runs
# ---------------------------------------------------------------------------


def _load_graphs(graphs_dir: str | Path) -> tuple[ChunkGraph, BackgroundGraph]:
    graphs_dir = Path(graphs_dir)
    return load_graph(graphs_dir / "smg_reviewed.json"), load_background(graphs_dir / "hbg.json")


def _retrieve_for_query(
    query: Query,
    graph: ChunkGraph,
    background: BackgroundGraph,
    config: PipelineConfig,
    embedder: EmbeddingProvider,
) -> tuple[Subgraph, HierarchicalSelection]:
    query_embedding = embedder.embed(query.text)
    subgraph = retrieve_subgraph(graph, query_embedding, config.retrieval())
    selection = retrieve_background(
        background,
        query_embedding,
        subgraph.pooled,
        config.weights,
        config.topk,
        prune=config.prune,
    )
    return subgraph, selection


def retrieval_to_dict(query: Query, subgraph: Subgraph, selection: HierarchicalSelection, config: PipelineConfig) -> dict:
    return {
        "query_id": query.query_id,
        "query_text": query.text,
        "smg": {
            "seeds": list(subgraph.seed_ids),
            "nodes": [
                {"id": node_id, "score": subgraph.scores[node_id], "order": order}
                for order, node_id in enumerate(subgraph.node_ids)
            ],
        },
        "hbg": {
            "themes": [{"id": t.theme_id, "score": t.score} for t in selection.themes],
            "abstracts": [
                {"id": a.paper_doc_id, "score": a.score, "theme": a.parent_theme_id}
                for a in selection.abstracts
            ],
            "chunks": [
                {
                    "doc": c.paper_doc_id,
                    "node": c.node_id,
                    "score": c.score,
                    "abstract": c.parent_abstract_id,
                    "theme": c.parent_theme_id,
                }
                for c in selection.chunks
            ],
        },
        "config": config.to_dict(),
    }


def extract_queries(review_text: str, chat: ChatProvider | None, config: PipelineConfig) -> list[Query]:
    if not review_text.strip():
        return []  # an empty review is a vacuous run, not an error
    return extract_review_comments(review_text, chat, max_chars=config.max_comment_chars)


def run_retrieve(
    corpus_path: str | Path,
    graphs_dir: str | Path,
    review_path: str | Path,
    out_dir: str | Path,
    config: PipelineConfig,
    *,
    fake: bool = True,
) -> list[Path]:
    """Dump per-query retrieval JSON without generation."""
    review_path = Path(review_path)
    if not review_path.exists():
        raise DataError(f"missing file: {review_path}")
    graph, background = _load_graphs(graphs_dir)
    embedder, chat = make_providers(config, fake)
    queries = extract_queries(review_path.read_text(encoding="utf-8"), chat, config)
    out_paths = []
    retrieval_dir = Path(out_dir) / "retrieval"
    for query in queries:
        subgraph, selection = _retrieve_for_query(query, graph, background, config, embedder)
        payload = retrieval_to_dict(query, subgraph, selection, config)
        payload["inputs"] = {
            "corpus": sha256_file(corpus_path),
            "review": sha256_file(review_path),
        }
        path = retrieval_dir / f"{query.query_id}.json"
        write_json(path, payload)
        out_paths.append(path)
    return out_paths


def run_explain(
    corpus_path: str | Path,
    graphs_dir: str | Path,
    review_path: str | Path,
    out_dir: str | Path,
    config: PipelineConfig,
    *,
    fake: bool = True,
) -> dict:
    """Retrieve, prompt, generate, and parse one explanation per review comment.

    Failures are recorded per query and do not abort the run; the returned
    summary (also written to run_summary.json) lists per-query status.
    """
    started = time.monotonic()
    review_path = Path(review_path)
    if not review_path.exists():
        raise DataError(f"missing file: {review_path}")
    graph, background = _load_graphs(graphs_dir)
    embedder, chat = make_providers(config, fake)
    queries = extract_queries(review_path.read_text(encoding="utf-8"), chat, config)

    inputs = {
        "corpus": sha256_file(corpus_path),
        "graphs": sha256_file(Path(graphs_dir) / "smg_reviewed.json"),
        "background": sha256_file(Path(graphs_dir) / "hbg.json"),
        "review": sha256_file(review_path),
    }
    explanations_dir = Path(out_dir) / "explanations"

    def handle(query: Query) -> dict:
        subgraph, selection = _retrieve_for_query(query, graph, background, config, embedder)
        smg_text = subgraph_evidence(graph, subgraph, config.paper_evidence_chars)
        hbg_text = background_evidence(background, selection, config.related_evidence_chars)
        bundle = assemble_prompt(query, smg_text, hbg_text)
        completion = generate_explanation(bundle, chat)
        explanation = parse_explanation(completion, query.query_id)
        payload = {
            "config": config.to_dict(),
            "inputs": inputs,
            "query_id": query.query_id,
            "query_text": query.text,
            "kind": query.kind,
            "over_limit": query.over_limit,
            "evidence": [
                {"index": e.index, "section_label": e.section_label, "reasoning": e.reasoning}
                for e in explanation.evidence
            ],
            "summary": explanation.summary,
            "raw": explanation.raw,
            "prompt_sha256": bundle.sha256,
            "zero_evidence": not explanation.evidence,
        }
        write_json(explanations_dir / f"{query.query_id}.json", payload)
        return {"query_id": query.query_id, "status": "ok"}

    results = []
    if config.jobs > 1 and len(queries) > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            futures = [pool.submit(handle, q) for q in queries]
            for query, future in zip(queries, futures):
                try:
                    results.append(future.result())
                except (DataError, ProviderError) as exc:
                    results.append(_failure(query, exc))
    else:
        for query in queries:
            try:
                results.append(handle(query))
            except (DataError, ProviderError) as exc:
                results.append(_failure(query, exc))

    summary = {
        "config": config.to_dict(),
        "inputs": inputs,
        "queries": results,
        "ok": sum(1 for r in results if r["status"] == "ok"),
        "failed": sum(1 for r in results if r["status"] != "ok"),
        "timing_seconds": round(time.monotonic() - started, 3),
    }
    write_json(Path(out_dir) / "run_summary.json", summary)
    return summary


def _failure(query: Query, exc: Exception) -> dict:
    logger.error("query %s failed: %s", query.query_id, exc)
    status = "provider_error" if isinstance(exc, ProviderError) else "data_error"
    return {"query_id": query.query_id, "status": status, "error": str(exc)}


# ---------------------------------------------------------------------------
# Evaluation runs
# ---------------------------------------------------------------------------


def _load_method_explanations(directory: str | Path) -> dict[str, tuple[Query, "Explanation"]]:
    from .explain import EvidenceItem, Explanation

    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"missing explanation directory: {directory}")
    loaded = {}
    for path in sorted(directory.glob("*.json")):
        payload = read_json(path)
        try:
            query = Query(
                query_id=payload["query_id"],
                text=payload["query_text"],
                kind=payload.get("kind", "other"),
                char_length=len(payload["query_text"]),
            )
            explanation = Explanation(
                query_id=payload["query_id"],
                evidence=tuple(
                    EvidenceItem(index=e["index"], section_label=e["section_label"], reasoning=e["reasoning"])
                    for e in payload["evidence"]
                ),
                summary=payload["summary"],
                raw=payload.get("raw", ""),
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed explanation artifact {path}: {exc}") from exc
        loaded[query.query_id] = (query, explanation)
    return loaded


def run_eval_pairwise(
    methods: dict[str, str | Path],
    out_dir: str | Path,
    config: PipelineConfig,
    *,
    metrics: tuple[str, ...] = ("relevance", "clarity", "criticality", "novelty"),
    fake: bool = True,
) -> Path:
    """Judge every method pair per query and metric; write judgments + CSV matrices."""
    from .evaluation import judge_pairwise, win_rate_matrix

    if len(methods) < 2:
        raise UsageError("pairwise evaluation needs at least two methods")
    _, chat = make_providers(config, fake)

    loaded = {name: _load_method_explanations(path) for name, path in methods.items()}
    names = sorted(loaded)
    reference_ids = set(loaded[names[0]])
    for name in names[1:]:
        ids = set(loaded[name])
        if ids != reference_ids:
            missing = sorted(reference_ids ^ ids)
            raise DataError(f"query_id sets differ between methods: {missing}")
    if not reference_ids:
        raise DataError("no explanations to evaluate")

    judgments = []
    for query_id in sorted(reference_ids):
        for metric in metrics:
            for i, name_a in enumerate(names):
                for name_b in names[i + 1 :]:
                    query, out_a = loaded[name_a][query_id]
                    _, out_b = loaded[name_b][query_id]
                    judgments.append(
                        judge_pairwise(
                            query, out_a, out_b, metric, chat, method_a=name_a, method_b=name_b
                        )
                    )

    eval_dir = Path(out_dir) / "eval"
    write_json(
        eval_dir / "judgments.json",
        {
            "config": config.to_dict(),
            "methods": {name: str(path) for name, path in methods.items()},
            "judgments": [
                {
                    "query_id": j.query_id,
                    "metric": j.metric,
                    "method_a": j.method_a,
                    "method_b": j.method_b,
                    "winner": j.winner,
                }
                for j in judgments
            ],
        },
    )
    for metric in metrics:
        matrix = win_rate_matrix(judgments, names, metric)
        lines = ["method," + ",".join(names)]
        for row in names:
            cells = []
            for col in names:
                cell = matrix[row][col]
                cells.append("" if cell is None else f"{cell.rate:.4f}")
            lines.append(f"{row}," + ",".join(cells))
        path = eval_dir / f"win_rate_{metric}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return eval_dir


def run_eval_ranking(ranks_path: str | Path, out_dir: str | Path, config: PipelineConfig, ndcg_k: int = 5) -> Path:
    """Aggregate a ranking file into average ranks and (optionally) NDCG@k."""
    from .evaluation import GradedRanking, RankingRecord, average_rank, ndcg_at_k

    payload = read_json(ranks_path)
    records = [
        RankingRecord(query_id=r["query_id"], metric=r["metric"], ranks=r["ranks"])
        for r in payload.get("records", [])
    ]
    report: dict = {"config": config.to_dict(), "inputs": {"ranks": sha256_file(ranks_path)}}
    if records:
        methods = sorted({m for r in records for m in r.ranks})
        report["average_rank"] = {m: average_rank(records, m) for m in methods}
        by_metric: dict[str, dict[str, float]] = {}
        for metric in sorted({r.metric for r in records}):
            subset = [r for r in records if r.metric == metric]
            by_metric[metric] = {m: average_rank(subset, m) for m in methods}
        report["average_rank_by_metric"] = by_metric
    graded = [
        GradedRanking(query_id=g["query_id"], ordered_grades=tuple(g["grades"]))
        for g in payload.get("graded", [])
    ]
    if graded:
        k = int(payload.get("ndcg_k", ndcg_k))
        per_query = {g.query_id: ndcg_at_k(g, k) for g in graded}
        report["ndcg"] = {
            "k": k,
            "per_query": per_query,
            "mean": sum(per_query.values()) / len(per_query),
        }
    if not records and not graded:
        raise DataError(f"ranking file {ranks_path} holds no records")
    out_path = Path(out_dir) / "eval" / "ranking_report.json"
    write_json(out_path, report)
    return out_path
