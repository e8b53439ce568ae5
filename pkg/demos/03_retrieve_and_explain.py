"""
Retrieval and explanation for one review comment
================================================

Runs the full query path: seed distribution over the document graph,
iterative expansion, hierarchical descent through the background graph,
prompt assembly, and a structured explanation from the offline fake chat.
"""

from pathlib import Path

import numpy as np

from reviewgraph import (
    ChunkingConfig,
    FakeChatProvider,
    HashEmbedder,
    HierarchicalWeights,
    RetrievalConfig,
    assemble_prompt,
    build_background_graph,
    build_graph,
    chunk_document,
    document_sentences,
    extract_review_comments,
    generate_explanation,
    load_corpus,
    node_distribution,
    parse_explanation,
    retrieve_background,
    retrieve_subgraph,
)
from reviewgraph.pipeline import background_evidence, subgraph_evidence

CORPUS = Path(__file__).resolve().parent.parent / "sample_corpus"

corpus = load_corpus(CORPUS / "manifest.json")
embedder = HashEmbedder(dim=64)
chat = FakeChatProvider(profile="auto")

sentences = document_sentences(corpus.reviewed_paper)
chunks = chunk_document(sentences, ChunkingConfig(theta1=0.3), embedder)
graph = build_graph(corpus.reviewed_paper.abstract_text, chunks, 0.75, embedder,
                    doc_id=corpus.reviewed_paper.doc_id)
background = build_background_graph(
    corpus.related_papers, chat, embedder, ChunkingConfig(theta1=0.3), 0.75,
)

# One review, split into individual comments without any model call.
review = (CORPUS / "reviews" / "review_e2e.md").read_text()
queries = extract_review_comments(review)
query = queries[1]
print(f"query {query.query_id} ({query.kind}): {query.text}")

# Seed distribution: which nodes does the comment point at?
query_embedding = embedder.embed(query.text)
p = node_distribution(graph, query_embedding)
top = np.argsort(-p)[:3]
print("\ntop seed probabilities:")
for node_id in top:
    print(f"  node {node_id}: P={p[node_id]:.3f}  {graph.nodes[node_id].text[:70]}...")

# Seeded sampling plus one-hop expansion gives the retrieved subgraph.
subgraph = retrieve_subgraph(graph, query_embedding, RetrievalConfig(k_seeds=3, iterations=2, branch=2, rng_seed=0))
print(f"\nretrieved {len(subgraph.node_ids)} nodes (seeds: {list(subgraph.seed_ids)})")

# The pooled subgraph embedding steers the background descent.
selection = retrieve_background(background, query_embedding, subgraph.pooled,
                                HierarchicalWeights(), topk=(2, 3, 5))
print("selected themes:", [t.theme_id for t in selection.themes])
print("selected papers:", [a.paper_doc_id for a in selection.abstracts])
print("top background chunk:", selection.chunks[0].text[:90], "...")

# Prompt assembly and generation; the fake chat emits a valid structure.
bundle = assemble_prompt(
    query,
    subgraph_evidence(graph, subgraph, budget=4000),
    background_evidence(background, selection, budget=4000),
)
completion = generate_explanation(bundle, chat)
explanation = parse_explanation(completion, query.query_id)
print(f"\nexplanation has {len(explanation.evidence)} evidence items")
for item in explanation.evidence:
    print(f"  Evidence {item.index} ({item.section_label}): {item.reasoning[:60]}...")
print("summary:", explanation.summary)
