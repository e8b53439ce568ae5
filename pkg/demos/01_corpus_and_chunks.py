"""
Parsing a corpus and chunking a paper
=====================================

Loads the bundled synthetic corpus, splits the reviewed paper into
sentences, and merges them into semantically coherent chunks with the
offline hash embedder.
"""

from pathlib import Path

from reviewgraph import ChunkingConfig, HashEmbedder, chunk_document, document_sentences, load_corpus

CORPUS = Path(__file__).resolve().parent.parent / "sample_corpus"

# A corpus is one reviewed paper, its related papers, and the raw reviews.
corpus = load_corpus(CORPUS / "manifest.json")
paper = corpus.reviewed_paper
print(f"reviewed paper: {paper.title}")
print(f"related papers: {len(corpus.related_papers)}, reviews: {len(corpus.reviews)}")
print(f"references parsed: {len(paper.references)}")

# Sentences carry their heading trail, so chunks never cross sections.
sentences = document_sentences(paper)
print(f"\nbody sentences: {len(sentences)}")
print("first sentence:", sentences[0].text)
print("its section path:", " > ".join(sentences[0].section_path))

# The merge threshold decides how eagerly adjacent sentences fuse. With the
# bag-of-words fake embedder a low threshold merges large spans, a high one
# keeps sentences apart.
embedder = HashEmbedder(dim=64)
for theta1 in (0.1, 0.3, 0.6):
    chunks = chunk_document(sentences, ChunkingConfig(theta1=theta1), embedder)
    sizes = [len(c.sentence_indices) for c in chunks]
    print(f"theta1={theta1}: {len(chunks)} chunks, largest spans {max(sizes)} sentences")

chunks = chunk_document(sentences, ChunkingConfig(theta1=0.3), embedder)
print("\na sample chunk:")
print(" ", chunks[0].text[:160], "...")
