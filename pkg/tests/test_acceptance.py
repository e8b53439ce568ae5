"""Acceptance suite: every criterion runs hermetically with offline fakes.

Each test prints one pass/fail line (run with ``pytest tests/test_acceptance.py -v -s``)
and enforces its stated tolerance and time budget.
"""

from __future__ import annotations

import itertools
import json
import math
import shutil
from pathlib import Path
from time import perf_counter

import numpy as np
import pytest

from reviewgraph.chunking import ChunkingConfig, chunk_document
from reviewgraph.cli import main as cli_main
from reviewgraph.docgraph import CONTEXTUAL, SEMANTIC
from reviewgraph.errors import DataError
from reviewgraph.evaluation import GradedRanking, PairwiseJudgment, RankingRecord, average_rank, ndcg_at_k, win_rate
from reviewgraph.explain import assemble_prompt, parse_explanation, render_explanation
from reviewgraph.ingest import Query
from reviewgraph.providers import FakeChatProvider, HashEmbedder, cosine
from reviewgraph.retrieval import (
    HierarchicalWeights,
    RetrievalConfig,
    node_distribution,
    retrieve_background,
    retrieve_subgraph,
)

from conftest import CORPUS_DIR, graph_from_vectors, random_unit, single_node_graph
from test_chunking import naive_chunk_boundaries, random_document
from test_retrieval import (
    QUERY_E1,
    eq3_oracle,
    expansion_oracle,
    hierarchical_oracle,
    probability_graph,
    synthetic_background,
)


def _report(number: int, label: str, budget_seconds: float | None, body) -> None:
    start = perf_counter()
    try:
        body()
        elapsed = perf_counter() - start
        if budget_seconds is not None:
            assert elapsed < budget_seconds, f"criterion {number} took {elapsed:.2f}s, budget {budget_seconds}s"
    except BaseException:
        print(f"ACCEPTANCE {number:02d} FAIL - {label}", flush=True)
        raise
    print(f"ACCEPTANCE {number:02d} PASS - {label} ({elapsed:.2f}s)", flush=True)


def test_criterion_01_chunking_oracle():
    def body():
        embedder = HashEmbedder(dim=64)
        rng = np.random.default_rng(101)
        thetas = [0.3, 0.6, 0.9]
        for i in range(200):
            sentences = random_document(rng, int(rng.integers(5, 41)))
            cfg = ChunkingConfig(theta1=thetas[i % 3], max_chunk_chars=300, max_chunk_sentences=6)
            chunks = chunk_document(sentences, cfg, embedder)
            assert [c.sentence_indices for c in chunks] == naive_chunk_boundaries(sentences, cfg, embedder)

    _report(1, "chunking matches naive greedy oracle on 200 random documents", 5.0, body)


def test_criterion_02_edge_oracle():
    def body():
        rng = np.random.default_rng(102)
        for _ in range(100):
            n_chunks = int(rng.integers(1, 51))
            theta2 = float(rng.uniform(0.1, 0.9))
            graph = graph_from_vectors([random_unit(rng, 8) for _ in range(n_chunks + 1)], theta2=theta2)
            n = len(graph.nodes)
            contextual = {(e.a, e.b) for e in graph.edges if e.kind == CONTEXTUAL}
            assert contextual == {(i, i + 1) for i in range(n - 1)}
            semantic = {(e.a, e.b) for e in graph.edges if e.kind == SEMANTIC}
            brute = set()
            for i in range(n):
                for j in range(i + 2, n):
                    if cosine(graph.nodes[i].embedding, graph.nodes[j].embedding) >= theta2:
                        brute.add((i, j))
            assert semantic == brute

    _report(2, "semantic edges equal brute-force thresholding on 100 random graphs", 5.0, body)


def test_criterion_03_distribution_validity():
    def body():
        rng = np.random.default_rng(103)
        for trial in range(1000):
            n = int(rng.integers(1, 12))
            if trial % 10 == 0:
                vectors = [-np.abs(random_unit(rng, 6)) for _ in range(n)]
                query = np.abs(random_unit(rng, 6))
            else:
                vectors = [random_unit(rng, 6) for _ in range(n)]
                query = random_unit(rng, 6)
            graph = single_node_graph(vectors[0]) if n == 1 else graph_from_vectors(vectors, theta2=0.7)
            p = node_distribution(graph, query)
            assert np.all(p >= 0)
            assert abs(p.sum() - 1.0) < 1e-9

    _report(3, "seed distribution valid on 1,000 random graph/query pairs", 2.0, body)


def test_criterion_04_expansion_oracle():
    def body():
        rng = np.random.default_rng(104)
        for trial in range(30):
            n = int(rng.integers(2, 9))
            graph = graph_from_vectors(
                [random_unit(rng, 6) for _ in range(n)], theta2=float(rng.uniform(0.2, 0.8))
            )
            query = random_unit(rng, 6)
            probabilities = node_distribution(graph, query)
            for alpha in (0.0, 0.5, 1.0, 2.0):
                cfg = RetrievalConfig(
                    k_seeds=int(rng.integers(1, n + 1)),
                    iterations=int(rng.integers(0, 4)),
                    branch=int(rng.integers(1, 4)),
                    alpha=alpha,
                    rng_seed=trial,
                )
                result = retrieve_subgraph(graph, query, cfg)
                assert list(result.node_ids) == expansion_oracle(graph, probabilities, result.seed_ids, cfg)

    _report(4, "expansion steps equal exhaustive scoring for alpha in {0, 0.5, 1, 2}", 2.0, body)


def test_criterion_05_seed_statistics():
    def body():
        graph = probability_graph([0.5, 0.3, 0.2])
        p = node_distribution(graph, QUERY_E1)
        assert np.allclose(p, [0.5, 0.3, 0.2], atol=1e-12)
        counts = np.zeros(3)
        for i in range(10_000):
            result = retrieve_subgraph(graph, QUERY_E1, RetrievalConfig(k_seeds=1, iterations=0, rng_seed=i))
            counts[result.seed_ids[0]] += 1
        freqs = counts / counts.sum()
        assert np.all(np.abs(freqs - np.array([0.5, 0.3, 0.2])) <= 0.02), freqs

    _report(5, "10,000 seeded draws match P = [0.5, 0.3, 0.2] within 0.02", 2.0, body)


def test_criterion_06_pooling():
    def body():
        rng = np.random.default_rng(106)
        graph = graph_from_vectors([random_unit(rng, 8) for _ in range(7)], theta2=0.4)
        result = retrieve_subgraph(
            graph, random_unit(rng, 8), RetrievalConfig(k_seeds=3, iterations=2, rng_seed=6)
        )
        mean = np.mean([graph.nodes[i].embedding for i in result.node_ids], axis=0)
        assert np.allclose(result.pooled, mean, atol=1e-9)
        solo = single_node_graph(np.array([0.25, 0.5, 0.75]))
        result = retrieve_subgraph(solo, QUERY_E1, RetrievalConfig(k_seeds=1, iterations=0))
        assert np.array_equal(result.pooled, solo.nodes[0].embedding)

    _report(6, "pooled equals member mean (1e-9); single node exact", None, body)


def test_criterion_07_hierarchical_oracle():
    def body():
        rng = np.random.default_rng(107)
        bg = synthetic_background(rng)
        query = random_unit(rng, 8)
        pooled = random_unit(rng, 8)
        random_weights = HierarchicalWeights(*np.round(rng.uniform(0.1, 2.0, size=9), 3).tolist())
        for weights in (HierarchicalWeights(), random_weights):
            selection = retrieve_background(bg, query, pooled, weights, (2, 3, 5))
            kept_t, kept_a, kept_c = hierarchical_oracle(bg, query, pooled, weights, (2, 3, 5))
            assert [t.theme_id for t in selection.themes] == kept_t
            assert [a.paper_doc_id for a in selection.abstracts] == [doc for doc, _, _ in kept_a]
            assert [(c.paper_doc_id, c.node_id) for c in selection.chunks] == [
                (doc, node) for doc, node, _, _ in kept_c
            ]

    _report(7, "three-level ranking equals full-enumeration oracle (all-1.0 and random weights)", 2.0, body)


def test_criterion_08_prompt_fidelity():
    def body():
        template = Path("src/reviewgraph/templates/explanation_prompt.txt").read_text(encoding="utf-8")
        rng = np.random.default_rng(108)
        words = ["graph", "budget", "spectral", "noise\nacross lines", "unicode ü", "  padded  "]
        for _ in range(25):
            review = " ".join(rng.choice(words, size=rng.integers(1, 5)))
            paper = " ".join(rng.choice(words, size=rng.integers(0, 7)))
            related = " ".join(rng.choice(words, size=rng.integers(0, 7)))
            query = Query("q1", review or "x", "other", len(review))
            bundle = assemble_prompt(query, paper, related)
            expected = (
                template.replace("{review}", query.text)
                .replace("{paper_highlights}", paper)
                .replace("{related_work}", related)
            )
            assert bundle.rendered == expected

    _report(8, "rendered prompt byte-identical to golden template around payloads (25 cases)", None, body)


def test_criterion_09_explanation_parsing():
    def body():
        chat = FakeChatProvider(profile="explanation")
        for i in range(20):
            reply = chat.chat(f"prompt {i} (excerpt from 1 Introduction) (excerpt from 4 Experiments)")
            parsed = parse_explanation(reply, f"q{i}")
            assert parsed.summary
            reparsed = parse_explanation(render_explanation(parsed), f"q{i}")
            assert reparsed == parsed
        with pytest.raises(DataError, match="missing summary"):
            parse_explanation("- **Evidence 1 (A)**: alone", "q")
        with pytest.raises(DataError, match="malformed evidence list"):
            parse_explanation("- **Evidence 1 (A)**: a\n- **Evidence 3 (B)**: b\n- **Summary**: s", "q")

    _report(9, "20 synthesized outputs parse with render/parse fixed point; malformed raise", None, body)


def test_criterion_10_eval_math():
    def body():
        per_metric = [1.89, 1.97, 2.02, 1.95, 1.83, 1.99]
        metrics = ["relevance", "clarity", "criticality", "novelty", "practicality", "persuasiveness"]
        records = [
            RankingRecord("agg", metric, {"ours": value})
            for metric, value in zip(metrics, per_metric)
        ]
        assert abs(average_rank(records, "ours") - 1.94) <= 0.005

        def permutation_oracle(grades, k):
            def dcg(order):
                return sum((2.0 ** g - 1.0) / math.log2(i + 2) for i, g in enumerate(order[:k]))

            best = max(dcg(p) for p in itertools.permutations(grades))
            return 0.0 if best == 0.0 else dcg(grades) / best

        rng = np.random.default_rng(110)
        for _ in range(150):
            n = int(rng.integers(1, 7))
            grades = tuple(float(g) for g in rng.integers(0, 4, size=n))
            k = int(rng.integers(1, 8))
            assert abs(ndcg_at_k(GradedRanking("q", grades), k) - permutation_oracle(grades, k)) < 1e-9

        for _ in range(1000):
            wins_a = int(rng.integers(0, 40))
            wins_b = int(rng.integers(0, 40))
            if wins_a + wins_b == 0:
                wins_b = 1
            judgments = (
                [PairwiseJudgment("q", "relevance", "m1", "m2", "a")] * wins_a
                + [PairwiseJudgment("q", "relevance", "m1", "m2", "b")] * wins_b
            )
            assert (
                win_rate(judgments, "m1", "m2", "relevance").rate
                + win_rate(judgments, "m2", "m1", "relevance").rate
                == 1.0
            )

    _report(10, "avg rank 1.94 +/- 0.005; NDCG matches permutation oracle; win-rate complement exact", None, body)


def test_criterion_11_end_to_end_hermetic(tmp_path):
    def body():
        review = str(CORPUS_DIR / "reviews" / "review_e2e.md")
        outputs = []
        for run_dir in (tmp_path / "r1", tmp_path / "r2"):
            assert cli_main([
                "ingest", "--manifest", str(CORPUS_DIR / "manifest.json"),
                "--out", str(run_dir), "--fake-providers", "--seed", "7",
            ]) == 0
            assert cli_main([
                "build", "--corpus", str(run_dir / "corpus.json"),
                "--out", str(run_dir), "--fake-providers", "--seed", "7",
            ]) == 0
            assert cli_main([
                "explain", "--corpus", str(run_dir / "corpus.json"), "--graphs", str(run_dir / "graphs"),
                "--review", review, "--out", str(run_dir), "--fake-providers", "--seed", "7",
            ]) == 0
            files = sorted((run_dir / "explanations").glob("*.json"))
            assert [f.name for f in files] == ["q1.json", "q2.json"]
            for f in files:
                assert json.loads(f.read_text())["summary"]
            outputs.append(run_dir)
        first, second = outputs
        for rel in [
            "corpus.json", "graphs/smg_reviewed.json", "graphs/hbg.json",
            "graphs/build_manifest.json", "explanations/q1.json", "explanations/q2.json",
        ]:
            assert (first / rel).read_bytes() == (second / rel).read_bytes(), rel

    _report(11, "hermetic ingest/build/explain run: 2 explanations, byte-stable", 10.0, body)


def test_criterion_12_argmax_invariance():
    def body():
        from test_chunking import random_document as make_doc

        rng = np.random.default_rng(112)
        sentences = make_doc(rng, 25)
        cfg = ChunkingConfig(theta1=0.6, max_chunk_chars=400, max_chunk_sentences=5)

        plain = HashEmbedder(dim=64)
        scaled = HashEmbedder(dim=64, scale=7.0)
        chunks_plain = chunk_document(sentences, cfg, plain)
        chunks_scaled = chunk_document(sentences, cfg, scaled)
        assert [c.sentence_indices for c in chunks_plain] == [c.sentence_indices for c in chunks_scaled]

        from reviewgraph.docgraph import build_graph

        graph_plain = build_graph("pruning budget abstract", chunks_plain, 0.75, plain, doc_id="p")
        graph_scaled = build_graph("pruning budget abstract", chunks_scaled, 0.75, scaled, doc_id="p")
        assert [(e.a, e.b, e.kind) for e in graph_plain.edges] == [
            (e.a, e.b, e.kind) for e in graph_scaled.edges
        ]

        query_plain = plain.embed("is the budget sensitivity analyzed")
        query_scaled = scaled.embed("is the budget sensitivity analyzed")
        p_plain = node_distribution(graph_plain, query_plain)
        p_scaled = node_distribution(graph_scaled, query_scaled)
        np.testing.assert_allclose(p_plain, p_scaled, rtol=0, atol=1e-12)

        cfg_r = RetrievalConfig(k_seeds=3, iterations=2, branch=2, rng_seed=9)
        r_plain = retrieve_subgraph(graph_plain, query_plain, cfg_r)
        r_scaled = retrieve_subgraph(graph_scaled, query_scaled, cfg_r)
        assert r_plain.node_ids == r_scaled.node_ids
        assert r_plain.seed_ids == r_scaled.seed_ids

        bg = synthetic_background(np.random.default_rng(55))
        scale = 7.0
        from reviewgraph.background import BackgroundGraph, AbstractNode, ThemeNode
        from reviewgraph.docgraph import ChunkGraph, GraphNode

        def scale_graph(g):
            nodes = [GraphNode(n.node_id, n.text, n.section_path, n.embedding * scale) for n in g.nodes]
            return ChunkGraph(g.doc_id, g.theta2, nodes, g.edges, g.adjacency)

        bg_scaled = BackgroundGraph(
            themes=[ThemeNode(t.theme_id, t.description, t.embedding * scale) for t in bg.themes],
            abstracts=[
                AbstractNode(a.paper_doc_id, a.title, a.abstract_text, a.embedding * scale, a.source)
                for a in bg.abstracts
            ],
            theme_links=list(bg.theme_links),
            child_graphs={k: scale_graph(g) for k, g in bg.child_graphs.items()},
        )
        query = random_unit(np.random.default_rng(56), 8)
        pooled = random_unit(np.random.default_rng(57), 8)
        sel = retrieve_background(bg, query, pooled, HierarchicalWeights(), (2, 3, 5))
        sel_scaled = retrieve_background(bg_scaled, query * scale, pooled * scale, HierarchicalWeights(), (2, 3, 5))
        assert [t.theme_id for t in sel.themes] == [t.theme_id for t in sel_scaled.themes]
        assert [a.paper_doc_id for a in sel.abstracts] == [a.paper_doc_id for a in sel_scaled.abstracts]
        assert [(c.paper_doc_id, c.node_id) for c in sel.chunks] == [
            (c.paper_doc_id, c.node_id) for c in sel_scaled.chunks
        ]

    _report(12, "scaling embeddings by 7.0 leaves rankings, edges, distributions unchanged", None, body)
