from __future__ import annotations

import json

import pytest

from reviewgraph.background import (
    LocalPaperSource,
    ThemeNode,
    build_background_graph,
    fetch_complementary,
    identify_cited,
    load_background,
    save_background,
    summarize_themes,
    SOURCE_CITED,
    SOURCE_COMPLEMENTARY,
)
from reviewgraph.chunking import ChunkingConfig
from reviewgraph.errors import DataError
from reviewgraph.providers import FakeChatProvider, HashEmbedder

from conftest import CORPUS_DIR

INDEX_PATH = CORPUS_DIR / "paper_index" / "index.json"


def canned_chat(papers, reply_obj, max_themes=6):
    """Fake chat pre-loaded with the exact theme prompt for these papers."""
    from reviewgraph.background import _THEME_PROMPT

    listing = "\n".join(f"Title: {t}\nAbstract: {a}\n" for t, a in papers)
    prompt = _THEME_PROMPT.replace("{max_themes}", str(max_themes)).replace("{papers}", listing)
    chat = FakeChatProvider()
    chat.register(prompt, json.dumps(reply_obj) if not isinstance(reply_obj, str) else reply_obj)
    return chat


# ---------------------------------------------------------------------------
# Theme summarization
# ---------------------------------------------------------------------------


def test_single_paper_gets_a_theme():
    papers = [("Lone Paper", "It stands alone.")]
    chat = canned_chat(papers, [{"theme": "solo work", "papers": ["Lone Paper"]}])
    themes, links = summarize_themes(papers, chat)
    assert len(themes) >= 1
    assert ("t0", 0) in links


def test_canned_assignment_passes_through():
    papers = [("P One", "a"), ("P Two", "b"), ("P Three", "c")]
    reply = [
        {"theme": "first group", "papers": ["P One", "P Three"]},
        {"theme": "second group", "papers": ["P Two"]},
    ]
    themes, links = summarize_themes(papers, canned_chat(papers, reply))
    assert [t.description for t in themes] == ["first group", "second group"]
    assert links == [("t0", 0), ("t0", 2), ("t1", 1)]


def test_five_theme_mixed_structure():
    # Structure mirroring a realistic grouping: five themes over a mixed
    # cited/complementary set, one of them a knowledge-retrieval theme.
    papers = [(f"Paper {i}", f"abstract {i}") for i in range(7)]
    reply = [
        {"theme": "Knowledge Retrieval", "papers": ["Paper 0", "Paper 1", "Paper 2"]},
        {"theme": "Graph-Based Retrieval", "papers": ["Paper 1", "Paper 3"]},
        {"theme": "Natural Language Processing", "papers": ["Paper 4"]},
        {"theme": "Peer Review and Academic Reliability", "papers": ["Paper 5"]},
        {"theme": "Multi-Agent Conversations", "papers": ["Paper 6"]},
    ]
    themes, links = summarize_themes(papers, canned_chat(papers, reply, max_themes=5), max_themes=5)
    assert len(themes) == 5
    assert themes[0].description == "Knowledge Retrieval"
    retrieval_papers = [idx for tid, idx in links if tid == "t0"]
    assert retrieval_papers == [0, 1, 2]
    # full coverage of the input set
    assert {idx for _, idx in links} == set(range(7))


def test_unassigned_papers_get_miscellaneous():
    papers = [("Known", "a"), ("Skipped", "b")]
    reply = [{"theme": "only theme", "papers": ["Known"]}]
    themes, links = summarize_themes(papers, canned_chat(papers, reply))
    assert themes[-1].description == "miscellaneous"
    assert (themes[-1].theme_id, 1) in links


def test_theme_extraction_fails_after_retries():
    papers = [("A", "x")]
    chat = canned_chat(papers, "definitely not json")
    # re-prompts hit the strict fake with an unregistered prompt -> also garbage
    chat.profile = "strict"
    from reviewgraph.background import _THEME_PROMPT, _REPROMPT_SUFFIX

    listing = "Title: A\nAbstract: x\n"
    prompt = _THEME_PROMPT.replace("{max_themes}", "6").replace("{papers}", listing)
    chat.register_sequence(prompt + _REPROMPT_SUFFIX, ["still wrong", "nope"])
    with pytest.raises(DataError, match="theme extraction failed"):
        summarize_themes(papers, chat)


def test_too_many_themes_rejected():
    papers = [("A", "x"), ("B", "y")]
    reply = [
        {"theme": "one", "papers": ["A"]},
        {"theme": "two", "papers": ["B"]},
        {"theme": "three", "papers": ["A"]},
    ]
    chat = canned_chat(papers, reply, max_themes=2)
    from reviewgraph.background import _THEME_PROMPT, _REPROMPT_SUFFIX

    listing = "Title: A\nAbstract: x\n\nTitle: B\nAbstract: y\n"
    prompt = _THEME_PROMPT.replace("{max_themes}", "2").replace("{papers}", listing)
    chat.register_sequence(prompt + _REPROMPT_SUFFIX, [json.dumps(reply), json.dumps(reply)])
    with pytest.raises(DataError, match="theme extraction failed"):
        summarize_themes(papers, chat, max_themes=2)


# ---------------------------------------------------------------------------
# Complementary papers
# ---------------------------------------------------------------------------


def test_fetch_zero_per_theme():
    source = LocalPaperSource(INDEX_PATH)
    assert fetch_complementary([ThemeNode("t0", "graph retrieval")], source, per_theme=0) == []


def test_fetch_matches_keyword_query():
    source = LocalPaperSource(INDEX_PATH)
    docs = fetch_complementary([ThemeNode("t0", "graph retrieval")], source, per_theme=5)
    titles = [d.title for d in docs]
    # exactly the two index records containing both "graph" and "retrieval";
    # the one with a popularity value ranks first
    assert titles == [
        "Subgraph Retrieval for Question Answering over Knowledge Bases",
        "Dense Passage Retrieval with Graph Reranking",
    ]


def test_fetch_deduplicates_existing_titles():
    source = LocalPaperSource(INDEX_PATH)
    docs = fetch_complementary(
        [ThemeNode("t0", "graph retrieval")],
        source,
        per_theme=5,
        existing_titles=["Subgraph Retrieval for Question Answering over Knowledge Bases"],
    )
    assert [d.title for d in docs] == ["Dense Passage Retrieval with Graph Reranking"]


def test_fetch_respects_per_theme_cap():
    source = LocalPaperSource(INDEX_PATH)
    docs = fetch_complementary([ThemeNode("t0", "graph retrieval")], source, per_theme=1)
    assert len(docs) == 1


# ---------------------------------------------------------------------------
# Cited-paper identification
# ---------------------------------------------------------------------------


def test_identify_cited_finds_all_bundled_papers(corpus):
    cited = identify_cited(corpus.reviewed_paper, corpus.related_papers)
    assert cited == {d.doc_id for d in corpus.related_papers}


def test_identify_cited_rejects_unrelated(corpus):
    from reviewgraph.ingest import parse_markdown

    stranger = parse_markdown("# Quantum Cheesemaking at Scale\n## Abstract\nCheese.", "qc")
    cited = identify_cited(corpus.reviewed_paper, [stranger])
    assert cited == set()


# ---------------------------------------------------------------------------
# Full graph assembly
# ---------------------------------------------------------------------------


def test_build_single_paper_graph(corpus, embedder):
    paper = corpus.related_papers[0]
    papers = [(paper.title, paper.abstract_text)]
    chat = canned_chat(papers, [{"theme": "sparsification", "papers": [paper.title]}])
    graph = build_background_graph([paper], chat, embedder, ChunkingConfig(), 0.75)
    assert len(graph.themes) == 1
    assert len(graph.abstracts) == 1
    assert paper.doc_id in graph.child_graphs
    graph.validate()


def test_build_six_paper_graph_with_canned_themes(corpus, embedder):
    papers = [(d.title, d.abstract_text) for d in corpus.related_papers]
    titles = [t for t, _ in papers]
    reply = [
        {"theme": "graph sparsification", "papers": titles[:2]},
        {"theme": "training dynamics", "papers": titles[2:4]},
        {"theme": "robust learning", "papers": titles[4:]},
    ]
    chat = canned_chat(papers, reply)
    graph = build_background_graph(corpus.related_papers, chat, embedder, ChunkingConfig(), 0.75)
    assert len(graph.themes) == 3
    assert len(graph.theme_links) == 6  # equals the canned assignment count
    assert {doc for _, doc in graph.theme_links} == {d.doc_id for d in corpus.related_papers}
    graph.validate()


def test_build_preserves_provenance(corpus, embedder):
    papers = corpus.related_papers[:2]
    listing = [(d.title, d.abstract_text) for d in papers]
    reply = [{"theme": "both", "papers": [t for t, _ in listing]}]
    chat = canned_chat(listing, reply)
    sources = {papers[0].doc_id: SOURCE_CITED, papers[1].doc_id: SOURCE_COMPLEMENTARY}
    graph = build_background_graph(papers, chat, embedder, ChunkingConfig(), 0.75, sources=sources)
    by_id = {a.paper_doc_id: a.source for a in graph.abstracts}
    assert by_id == sources


def test_build_with_paper_source_attaches_complementary(corpus, embedder):
    papers = corpus.related_papers[:2]
    listing = [(d.title, d.abstract_text) for d in papers]
    reply = [{"theme": "graph retrieval", "papers": [t for t, _ in listing]}]
    chat = canned_chat(listing, reply)
    graph = build_background_graph(
        papers,
        chat,
        embedder,
        ChunkingConfig(),
        0.75,
        paper_source=LocalPaperSource(INDEX_PATH),
        per_theme=2,
    )
    complementary = [a for a in graph.abstracts if a.source == SOURCE_COMPLEMENTARY]
    assert len(complementary) == 2
    for node in complementary:
        assert ("t0", node.paper_doc_id) in graph.theme_links
        assert node.paper_doc_id in graph.child_graphs
    graph.validate()


def test_build_rejects_empty_related(embedder):
    with pytest.raises(DataError):
        build_background_graph([], FakeChatProvider(), embedder, ChunkingConfig(), 0.75)


def test_save_load_round_trip_and_determinism(tmp_path, corpus, embedder):
    papers = corpus.related_papers[:3]
    listing = [(d.title, d.abstract_text) for d in papers]
    reply = [
        {"theme": "alpha", "papers": [listing[0][0], listing[1][0]]},
        {"theme": "beta", "papers": [listing[2][0]]},
    ]

    def build_once():
        return build_background_graph(
            papers, canned_chat(listing, reply), HashEmbedder(dim=64), ChunkingConfig(), 0.75
        )

    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    out_a.mkdir()
    out_b.mkdir()
    save_background(build_once(), out_a / "hbg.json")
    save_background(build_once(), out_b / "hbg.json")
    assert (out_a / "hbg.json").read_bytes() == (out_b / "hbg.json").read_bytes()
    for child in sorted(p.name for p in (out_a / "smg").iterdir()):
        assert (out_a / "smg" / child).read_bytes() == (out_b / "smg" / child).read_bytes()

    loaded = load_background(out_a / "hbg.json")
    loaded.validate()
    assert [t.theme_id for t in loaded.themes] == ["t0", "t1"]
    assert sorted(loaded.child_graphs) == sorted(d.doc_id for d in papers)
