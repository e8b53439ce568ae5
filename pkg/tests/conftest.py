from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from reviewgraph.chunking import Chunk
from reviewgraph.docgraph import ChunkGraph, GraphNode, build_graph
from reviewgraph.providers import HashEmbedder

REPO_ROOT = Path(__file__).resolve().parent.parent
CORPUS_DIR = REPO_ROOT / "sample_corpus"
DATA_DIR = Path(__file__).resolve().parent / "data"


class MapEmbedder:
    """Test stub that returns preset vectors keyed by exact text."""

    def __init__(self, mapping: dict[str, np.ndarray], name: str = "map"):
        self.mapping = {k: np.asarray(v, dtype=np.float64) for k, v in mapping.items()}
        self.dim = len(next(iter(self.mapping.values())))
        self.name = name
        self.calls = 0

    def embed(self, text: str) -> np.ndarray:
        self.calls += 1
        return self.mapping[text]


def graph_from_vectors(vectors, theta2: float, doc_id: str = "fixture") -> ChunkGraph:
    """Build a real graph whose node embeddings are exactly the given vectors.

    vectors[0] becomes the abstract node; the rest become chunk nodes.
    """
    vectors = [np.asarray(v, dtype=np.float64) for v in vectors]
    mapping = {f"text {i}": v for i, v in enumerate(vectors)}
    provider = MapEmbedder(mapping)
    chunks = [
        Chunk(
            chunk_id=f"c{i - 1}",
            sentence_indices=(i - 1,),
            text=f"text {i}",
            section_path=("Body",),
            embedding=vectors[i],
        )
        for i in range(1, len(vectors))
    ]
    return build_graph("text 0", chunks, theta2, provider, doc_id=doc_id)


def single_node_graph(vector) -> ChunkGraph:
    """Degenerate one-node graph for distribution edge cases."""
    node = GraphNode(0, "only", ("Body",), np.asarray(vector, dtype=np.float64))
    return ChunkGraph(doc_id="one", theta2=0.75, nodes=[node], edges=[], adjacency={0: ()})


def random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


@pytest.fixture()
def embedder() -> HashEmbedder:
    return HashEmbedder(dim=64)


@pytest.fixture(scope="session")
def corpus():
    from reviewgraph.ingest import load_corpus

    return load_corpus(CORPUS_DIR / "manifest.json")
