"""Per-document semantic graph: abstract node, reading-order path, similarity edges.

Node 0 always holds the paper abstract. Contextual edges form the path
0-1-2-...-n following reading order; every remaining pair gets a semantic
edge iff the cosine similarity of its embeddings reaches theta2. A pair on
the contextual path keeps kind "contextual" even when it also clears the
threshold; its similarity is recorded either way.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .chunking import Chunk
from .errors import DataError
from .providers import EmbeddingProvider, cosine

logger = logging.getLogger(__name__)

ABSTRACT_NODE_ID = 0
ABSTRACT_SECTION = ("Abstract",)

CONTEXTUAL = "contextual"
SEMANTIC = "semantic"


@dataclass(eq=False)
class GraphNode:
    node_id: int
    text: str
    section_path: tuple[str, ...]
    embedding: np.ndarray


@dataclass(frozen=True)
class GraphEdge:
    a: int  # a < b, undirected canonical order
    b: int
    kind: str
    similarity: float


@dataclass(eq=False)
class ChunkGraph:
    doc_id: str
    theta2: float
    nodes: list[GraphNode]
    edges: list[GraphEdge]
    adjacency: dict[int, tuple[int, ...]]

    def __len__(self) -> int:
        return len(self.nodes)


def _build_adjacency(node_count: int, edges: Iterable[GraphEdge]) -> dict[int, tuple[int, ...]]:
    neighbors: dict[int, list[int]] = {i: [] for i in range(node_count)}
    for edge in edges:
        neighbors[edge.a].append(edge.b)
        neighbors[edge.b].append(edge.a)
    return {i: tuple(sorted(ns)) for i, ns in neighbors.items()}


def build_graph(
    abstract_text: str,
    chunks: Sequence[Chunk],
    theta2: float,
    provider: EmbeddingProvider,
    doc_id: str = "",
) -> ChunkGraph:
    """Assemble the document graph from pre-chunked text.

    Semantic edges are found by an exhaustive pairwise scan; documents have
    at most a few hundred chunks, so no index structure is warranted.
    """
    if not chunks:
        raise DataError("no chunks")
    if not abstract_text.strip():
        raise DataError("abstract text must be non-empty")

    nodes = [GraphNode(ABSTRACT_NODE_ID, abstract_text.strip(), ABSTRACT_SECTION, provider.embed(abstract_text))]
    for offset, chunk in enumerate(chunks):
        nodes.append(GraphNode(offset + 1, chunk.text, chunk.section_path, chunk.embedding))

    edges: list[GraphEdge] = []
    n = len(nodes)
    for i in range(n - 1):
        sim = cosine(nodes[i].embedding, nodes[i + 1].embedding)
        edges.append(GraphEdge(i, i + 1, CONTEXTUAL, sim))
    for i in range(n):
        for j in range(i + 2, n):
            sim = cosine(nodes[i].embedding, nodes[j].embedding)
            if sim >= theta2:
                edges.append(GraphEdge(i, j, SEMANTIC, sim))

    return ChunkGraph(
        doc_id=doc_id,
        theta2=theta2,
        nodes=nodes,
        edges=edges,
        adjacency=_build_adjacency(n, edges),
    )


def graph_outline(graph: ChunkGraph, selected: Iterable[int] | None = None) -> str:
    """Render nodes as excerpt lines in node-id order, optionally restricted.

    Each line is "- <text> (excerpt from <section path>)".
    """
    if selected is None:
        ids = [node.node_id for node in graph.nodes]
    else:
        ids = sorted(set(selected))
        known = {node.node_id for node in graph.nodes}
        unknown = [i for i in ids if i not in known]
        if unknown:
            raise DataError(f"unknown node ids in selection: {unknown}")
    by_id = {node.node_id: node for node in graph.nodes}
    lines = []
    for node_id in ids:
        node = by_id[node_id]
        location = " ".join(node.section_path) if node.section_path else "Document"
        lines.append(f"- {node.text} (excerpt from {location})")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def graph_to_dict(graph: ChunkGraph) -> dict:
    return {
        "doc_id": graph.doc_id,
        "theta2": graph.theta2,
        "nodes": [
            {
                "id": node.node_id,
                "text": node.text,
                "section_path": list(node.section_path),
                "embedding": [float(x) for x in node.embedding],
            }
            for node in graph.nodes
        ],
        "edges": [
            {"a": edge.a, "b": edge.b, "kind": edge.kind, "similarity": edge.similarity}
            for edge in graph.edges
        ],
    }


def graph_from_dict(payload: dict) -> ChunkGraph:
    try:
        nodes = [
            GraphNode(
                node_id=int(item["id"]),
                text=item["text"],
                section_path=tuple(item["section_path"]),
                embedding=np.asarray(item["embedding"], dtype=np.float64),
            )
            for item in payload["nodes"]
        ]
        edges = [
            GraphEdge(a=int(item["a"]), b=int(item["b"]), kind=item["kind"], similarity=float(item["similarity"]))
            for item in payload["edges"]
        ]
        return ChunkGraph(
            doc_id=payload["doc_id"],
            theta2=float(payload["theta2"]),
            nodes=nodes,
            edges=edges,
            adjacency=_build_adjacency(len(nodes), edges),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed graph payload: {exc}") from exc


def save_graph(graph: ChunkGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(graph), ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


def load_graph(path: str | Path) -> ChunkGraph:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid graph file {path}: {exc}") from exc
    return graph_from_dict(payload)
