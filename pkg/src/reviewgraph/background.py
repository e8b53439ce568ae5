"""Three-layer background graph: themes -> paper abstracts -> per-paper graphs.

Themes are short research-topic summaries produced by a chat model over the
related papers' titles and abstracts; each theme links to the papers assigned
to it, and every paper carries its own chunk graph as the fine-grained third
layer. Complementary papers can be pulled from a pluggable paper source and
are linked to the theme whose description matched them.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .chunking import ChunkingConfig, chunk_document, document_sentences
from .docgraph import ChunkGraph, build_graph, graph_from_dict, graph_to_dict
from .errors import DataError
from .ingest import SourceDocument, parse_markdown
from .providers import ChatProvider, EmbeddingProvider

logger = logging.getLogger(__name__)

SOURCE_CITED = "cited"
SOURCE_COMPLEMENTARY = "complementary"

MISCELLANEOUS_THEME = "miscellaneous"

_THEME_PROMPT = """You will be given a list of paper titles and abstracts.
Summarize the research themes they cover and assign every paper to at least one theme.
Respond with only a JSON array where each element is {"theme": <short descriptive summary>, "papers": [<exact paper titles>]}.
Use at most {max_themes} themes.

Papers:
{papers}"""

_REPROMPT_SUFFIX = "\n\nYour previous reply was not a valid assignment. Respond with only the JSON array."


@dataclass(eq=False)
class ThemeNode:
    theme_id: str
    description: str
    embedding: np.ndarray | None = None


@dataclass(eq=False)
class AbstractNode:
    paper_doc_id: str
    title: str
    abstract_text: str
    embedding: np.ndarray | None = None
    source: str = SOURCE_CITED


@dataclass(eq=False)
class BackgroundGraph:
    themes: list[ThemeNode]
    abstracts: list[AbstractNode]
    theme_links: list[tuple[str, str]]  # (theme_id, paper_doc_id)
    child_graphs: dict[str, ChunkGraph] = field(default_factory=dict)

    def papers_of_theme(self, theme_id: str) -> list[str]:
        return [doc for tid, doc in self.theme_links if tid == theme_id]

    def themes_of_paper(self, paper_doc_id: str) -> list[str]:
        return [tid for tid, doc in self.theme_links if doc == paper_doc_id]

    def validate(self) -> None:
        theme_ids = {t.theme_id for t in self.themes}
        paper_ids = {a.paper_doc_id for a in self.abstracts}
        for tid, doc in self.theme_links:
            if tid not in theme_ids or doc not in paper_ids:
                raise DataError(f"dangling theme link: ({tid}, {doc})")
        for abstract in self.abstracts:
            if not self.themes_of_paper(abstract.paper_doc_id):
                raise DataError(f"abstract {abstract.paper_doc_id} is linked to no theme")
            if abstract.paper_doc_id not in self.child_graphs:
                raise DataError(f"abstract {abstract.paper_doc_id} has no child graph")
        for theme in self.themes:
            if not self.papers_of_theme(theme.theme_id):
                raise DataError(f"theme {theme.theme_id} is linked to no abstract")


# ---------------------------------------------------------------------------
# Theme summarization
# ---------------------------------------------------------------------------


def summarize_themes(
    papers: Sequence[tuple[str, str]],
    chat: ChatProvider,
    max_themes: int = 6,
) -> tuple[list[ThemeNode], list[tuple[str, int]]]:
    """Ask the chat model to group (title, abstract) pairs into themes.

    Returns theme nodes (embeddings unset) and links as (theme_id, paper
    index into ``papers``). Papers the model leaves out are collected under a
    catch-all "miscellaneous" theme. The model gets two re-prompts before the
    extraction is abandoned.
    """
    if not papers:
        raise DataError("no papers to summarize")
    if max_themes < 1:
        raise DataError("max_themes must be >= 1")

    listing = "\n".join(f"Title: {title}\nAbstract: {abstract}\n" for title, abstract in papers)
    prompt = _THEME_PROMPT.replace("{max_themes}", str(max_themes)).replace("{papers}", listing)

    last_error = "no attempt"
    for attempt in range(3):
        reply = chat.chat(prompt if attempt == 0 else prompt + _REPROMPT_SUFFIX)
        try:
            return _parse_theme_reply(reply, papers, max_themes)
        except DataError as exc:
            last_error = str(exc)
            logger.warning("theme reply attempt %d rejected: %s", attempt + 1, exc)
    raise DataError(f"theme extraction failed: {last_error}")


def _normalize_title(title: str) -> str:
    return re.sub(r"\s+", " ", re.sub(r"[^a-z0-9\s]", " ", title.casefold())).strip()


def _parse_theme_reply(
    reply: str,
    papers: Sequence[tuple[str, str]],
    max_themes: int,
) -> tuple[list[ThemeNode], list[tuple[str, int]]]:
    text = reply.strip()
    fence = re.search(r"```(?:json)?\s*\n(.*?)\n\s*```", text, re.S)
    if fence:
        text = fence.group(1)
    try:
        items = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"theme reply is not JSON: {exc}") from exc
    if not isinstance(items, list) or not items:
        raise DataError("theme reply must be a non-empty JSON array")
    if len(items) > max_themes:
        raise DataError(f"theme reply lists {len(items)} themes, cap is {max_themes}")

    index_by_title = {_normalize_title(title): i for i, (title, _) in enumerate(papers)}
    themes: list[ThemeNode] = []
    links: list[tuple[str, int]] = []
    assigned: set[int] = set()
    for item in items:
        if not isinstance(item, dict) or not str(item.get("theme", "")).strip():
            raise DataError("each theme entry needs a non-empty 'theme' description")
        if not isinstance(item.get("papers"), list):
            raise DataError("each theme entry needs a 'papers' list")
        theme_id = f"t{len(themes)}"
        themes.append(ThemeNode(theme_id=theme_id, description=str(item["theme"]).strip()))
        for title in item["papers"]:
            idx = index_by_title.get(_normalize_title(str(title)))
            if idx is None:
                logger.warning("theme reply names unknown paper %r; ignored", title)
                continue
            if (theme_id, idx) not in links:
                links.append((theme_id, idx))
                assigned.add(idx)

    missing = [i for i in range(len(papers)) if i not in assigned]
    if missing:
        theme_id = f"t{len(themes)}"
        themes.append(ThemeNode(theme_id=theme_id, description=MISCELLANEOUS_THEME))
        links.extend((theme_id, i) for i in missing)

    # A theme the model declared but assigned nothing to would break the
    # every-theme-has-papers invariant; drop it and renumber.
    used = {tid for tid, _ in links}
    kept = [t for t in themes if t.theme_id in used]
    if len(kept) != len(themes):
        renumber = {t.theme_id: f"t{i}" for i, t in enumerate(kept)}
        links = [(renumber[tid], idx) for tid, idx in links]
        for t in kept:
            t.theme_id = renumber[t.theme_id]
    return kept, links


# ---------------------------------------------------------------------------
# Paper sources and complementary papers
# ---------------------------------------------------------------------------


class PaperSource(Protocol):
    def search(self, query: str, limit: int) -> list[SourceDocument]: ...


class LocalPaperSource:
    """Paper source over a local directory index.

    The index is a JSON array of {path, title, abstract, year, popularity?}
    records with paths relative to the index file. A record matches a query
    when every query token of length >= 3 occurs in its title+abstract.
    Results are ordered by popularity when present, then by year descending.
    """

    def __init__(self, index_path: str | Path):
        self.index_path = Path(index_path)
        if not self.index_path.exists():
            raise DataError(f"missing file: {self.index_path}")
        try:
            self._records = json.loads(self.index_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid paper index {self.index_path}: {exc}") from exc
        if not isinstance(self._records, list):
            raise DataError("paper index must be a JSON array")

    def search(self, query: str, limit: int) -> list[SourceDocument]:
        tokens = [t for t in re.findall(r"[a-z0-9]+", query.lower()) if len(t) >= 3]
        if limit <= 0 or not tokens:
            return []
        matches = []
        for record in self._records:
            haystack = f"{record.get('title', '')} {record.get('abstract', '')}".lower()
            if all(token in haystack for token in tokens):
                matches.append(record)
        matches.sort(
            key=lambda r: (
                -(r.get("popularity") if r.get("popularity") is not None else float("-inf")),
                -(r.get("year") or 0),
                r.get("title", ""),
            )
        )
        documents = []
        for record in matches[:limit]:
            path = self.index_path.parent / record["path"]
            if not path.exists():
                raise DataError(f"missing file: {path}")
            documents.append(parse_markdown(path.read_text(encoding="utf-8"), doc_id=path.stem))
        return documents


def fetch_complementary(
    themes: Sequence[ThemeNode],
    source: PaperSource,
    per_theme: int,
    existing_titles: Iterable[str] = (),
) -> list[SourceDocument]:
    """Query the paper source per theme; flat, title-deduplicated result."""
    grouped = fetch_complementary_by_theme(themes, source, per_theme, existing_titles)
    return [doc for docs in grouped.values() for doc in docs]


def fetch_complementary_by_theme(
    themes: Sequence[ThemeNode],
    source: PaperSource,
    per_theme: int,
    existing_titles: Iterable[str] = (),
) -> dict[str, list[SourceDocument]]:
    if per_theme < 0:
        raise DataError("per_theme must be >= 0")
    seen = {_normalize_title(t) for t in existing_titles}
    grouped: dict[str, list[SourceDocument]] = {}
    if per_theme == 0:
        return grouped
    for theme in themes:
        kept: list[SourceDocument] = []
        for doc in source.search(theme.description, limit=per_theme + len(seen)):
            key = _normalize_title(doc.title)
            if key in seen:
                continue
            seen.add(key)
            kept.append(doc)
            if len(kept) >= per_theme:
                break
        if kept:
            grouped[theme.theme_id] = kept
    return grouped


def identify_cited(
    reviewed: SourceDocument,
    candidates: Sequence[SourceDocument],
    threshold: float = 0.7,
) -> set[str]:
    """Doc ids of candidates whose title tokens appear in the related-work text.

    A candidate counts as cited when at least ``threshold`` of its title
    tokens occur in the reviewed paper's related-work section body (falling
    back to the whole document when no such section exists).
    """
    body = ""
    for section in reviewed.sections:
        if "related work" in section.heading.casefold():
            body = section.body
            break
    else:
        body = "\n".join(s.body for s in reviewed.sections)
    haystack = set(re.findall(r"[a-z0-9]+", body.lower()))
    cited = set()
    for doc in candidates:
        tokens = [t for t in re.findall(r"[a-z0-9]+", doc.title.lower()) if len(t) >= 3]
        if not tokens:
            continue
        overlap = sum(1 for t in tokens if t in haystack) / len(tokens)
        if overlap >= threshold:
            cited.add(doc.doc_id)
    return cited


# ---------------------------------------------------------------------------
# Graph assembly
# ---------------------------------------------------------------------------


def build_background_graph(
    related: Sequence[SourceDocument],
    chat: ChatProvider,
    embedder: EmbeddingProvider,
    chunk_cfg: ChunkingConfig,
    theta2: float,
    *,
    sources: dict[str, str] | None = None,
    paper_source: PaperSource | None = None,
    per_theme: int = 0,
    max_themes: int = 6,
    jobs: int = 1,
) -> BackgroundGraph:
    """Build the full three-layer graph over the related papers.

    ``sources`` maps doc_id -> "cited"/"complementary" provenance for the
    given papers (default: all cited). When ``paper_source`` is set,
    ``per_theme`` extra papers per theme are fetched after theme
    summarization and linked to the theme that found them.
    """
    if not related:
        raise DataError("related paper list must be non-empty")
    provenance = dict(sources or {})

    themes, index_links = summarize_themes([(d.title, d.abstract_text) for d in related], chat, max_themes)
    papers: list[SourceDocument] = list(related)
    links: list[tuple[str, str]] = [(tid, related[idx].doc_id) for tid, idx in index_links]

    if paper_source is not None and per_theme > 0:
        existing = [d.title for d in related]
        fetched = fetch_complementary_by_theme(themes, paper_source, per_theme, existing)
        known_ids = {d.doc_id for d in papers}
        for theme_id in sorted(fetched):
            for doc in fetched[theme_id]:
                if doc.doc_id in known_ids:
                    links.append((theme_id, doc.doc_id))
                    continue
                known_ids.add(doc.doc_id)
                papers.append(doc)
                links.append((theme_id, doc.doc_id))
                provenance.setdefault(doc.doc_id, SOURCE_COMPLEMENTARY)

    for theme in themes:
        theme.embedding = embedder.embed(theme.description)

    abstracts = []
    for doc in papers:
        if not doc.abstract_text.strip():
            raise DataError(f"paper {doc.doc_id}: abstract is empty")
        abstracts.append(
            AbstractNode(
                paper_doc_id=doc.doc_id,
                title=doc.title,
                abstract_text=doc.abstract_text,
                embedding=embedder.embed(doc.abstract_text),
                source=provenance.get(doc.doc_id, SOURCE_CITED),
            )
        )

    def child_graph(doc: SourceDocument) -> ChunkGraph:
        try:
            sentences = document_sentences(doc)
            chunks = chunk_document(sentences, chunk_cfg, embedder)
            return build_graph(doc.abstract_text, chunks, theta2, embedder, doc_id=doc.doc_id)
        except DataError as exc:
            raise DataError(f"paper {doc.doc_id}: {exc}") from exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            graphs = list(pool.map(child_graph, papers))
    else:
        graphs = [child_graph(doc) for doc in papers]

    graph = BackgroundGraph(
        themes=themes,
        abstracts=abstracts,
        theme_links=links,
        child_graphs={doc.doc_id: g for doc, g in zip(papers, graphs)},
    )
    graph.validate()
    return graph


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _safe_filename(doc_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", doc_id)


def save_background(graph: BackgroundGraph, path: str | Path, child_dir: str = "smg") -> None:
    """Write the background graph JSON plus one child graph file per paper."""
    path = Path(path)
    children_root = path.parent / child_dir
    children_root.mkdir(parents=True, exist_ok=True)
    child_paths = {}
    for doc_id in sorted(graph.child_graphs):
        rel = f"{child_dir}/{_safe_filename(doc_id)}.json"
        child_paths[doc_id] = rel
        child = graph.child_graphs[doc_id]
        (path.parent / rel).write_text(
            json.dumps(graph_to_dict(child), ensure_ascii=False, indent=1) + "\n", encoding="utf-8"
        )
    payload = {
        "themes": [
            {"id": t.theme_id, "description": t.description, "embedding": [float(x) for x in t.embedding]}
            for t in graph.themes
        ],
        "abstracts": [
            {
                "paper_doc_id": a.paper_doc_id,
                "title": a.title,
                "abstract": a.abstract_text,
                "embedding": [float(x) for x in a.embedding],
                "source": a.source,
            }
            for a in graph.abstracts
        ],
        "theme_links": [[tid, doc] for tid, doc in graph.theme_links],
        "child_graphs": child_paths,
    }
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


def load_background(path: str | Path) -> BackgroundGraph:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        themes = [
            ThemeNode(theme_id=t["id"], description=t["description"], embedding=np.asarray(t["embedding"], dtype=np.float64))
            for t in payload["themes"]
        ]
        abstracts = [
            AbstractNode(
                paper_doc_id=a["paper_doc_id"],
                title=a["title"],
                abstract_text=a["abstract"],
                embedding=np.asarray(a["embedding"], dtype=np.float64),
                source=a["source"],
            )
            for a in payload["abstracts"]
        ]
        links = [(tid, doc) for tid, doc in payload["theme_links"]]
        children = {}
        for doc_id, rel in payload["child_graphs"].items():
            child_payload = json.loads((path.parent / rel).read_text(encoding="utf-8"))
            children[doc_id] = graph_from_dict(child_payload)
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise DataError(f"malformed background graph {path}: {exc}") from exc
    graph = BackgroundGraph(themes=themes, abstracts=abstracts, theme_links=links, child_graphs=children)
    graph.validate()
    return graph
