"""
Building the two graphs
=======================

Constructs the per-document semantic graph for the reviewed paper and the
three-layer background graph over the related papers, entirely offline.
"""

from collections import Counter
from pathlib import Path

from reviewgraph import (
    ChunkingConfig,
    FakeChatProvider,
    HashEmbedder,
    build_background_graph,
    build_graph,
    chunk_document,
    document_sentences,
    graph_outline,
    identify_cited,
    load_corpus,
)

CORPUS = Path(__file__).resolve().parent.parent / "sample_corpus"

corpus = load_corpus(CORPUS / "manifest.json")
embedder = HashEmbedder(dim=64)
chat = FakeChatProvider(profile="auto")  # offline stand-in for the chat model

# --- document graph: abstract node + chunk nodes, path + similarity edges
sentences = document_sentences(corpus.reviewed_paper)
chunks = chunk_document(sentences, ChunkingConfig(theta1=0.3), embedder)
graph = build_graph(corpus.reviewed_paper.abstract_text, chunks, theta2=0.75,
                    provider=embedder, doc_id=corpus.reviewed_paper.doc_id)
kinds = Counter(e.kind for e in graph.edges)
print(f"document graph: {len(graph.nodes)} nodes, {kinds['contextual']} contextual edges, "
      f"{kinds['semantic']} semantic edges")
print("\nfirst outline lines:")
for line in graph_outline(graph).splitlines()[:3]:
    print(" ", line[:110])

# --- background graph: themes -> abstracts -> per-paper graphs
cited = identify_cited(corpus.reviewed_paper, corpus.related_papers)
print(f"\npapers detected in the related-work text: {sorted(cited)}")

background = build_background_graph(
    corpus.related_papers, chat, embedder, ChunkingConfig(theta1=0.3), theta2=0.75,
)
print(f"background graph: {len(background.themes)} themes over {len(background.abstracts)} papers")
for theme in background.themes:
    members = background.papers_of_theme(theme.theme_id)
    print(f"  {theme.theme_id}: {theme.description!r} -> {members}")
chunk_counts = {doc: len(g.nodes) - 1 for doc, g in background.child_graphs.items()}
print("chunks per child graph:", chunk_counts)
