"""Graph-based retrieval and explanation of peer-review comments.

The pipeline parses a reviewed paper and its related literature, builds a
semantic graph over the paper's chunks plus a hierarchical background graph
over the related papers, retrieves query-relevant evidence from both, and
prompts a chat model for a structured Evidence/Summary explanation of each
review comment.
"""

from .background import (
    AbstractNode,
    BackgroundGraph,
    LocalPaperSource,
    ThemeNode,
    build_background_graph,
    fetch_complementary,
    identify_cited,
    load_background,
    save_background,
    summarize_themes,
)
from .chunking import Chunk, ChunkingConfig, Sentence, chunk_document, document_sentences, split_sentences
from .config import PipelineConfig
from .docgraph import ChunkGraph, GraphEdge, GraphNode, build_graph, graph_outline, load_graph, save_graph
from .errors import DataError, ProviderError, ReviewGraphError, UsageError
from .evaluation import (
    GradedRanking,
    PairwiseJudgment,
    RankingRecord,
    WinRate,
    average_rank,
    judge_direct,
    judge_pairwise,
    ndcg_at_k,
    win_rate,
    win_rate_matrix,
)
from .explain import (
    EvidenceItem,
    Explanation,
    PromptBundle,
    assemble_prompt,
    generate_explanation,
    parse_explanation,
    render_explanation,
)
from .ingest import Corpus, Query, Reference, Section, SourceDocument, extract_review_comments, load_corpus, parse_markdown
from .providers import (
    CachedEmbedder,
    DecodeParams,
    FakeChatProvider,
    HashEmbedder,
    HttpChatClient,
    HttpEmbeddingClient,
    ProviderConfig,
    cosine,
    rectified_similarity,
)
from .retrieval import (
    HierarchicalSelection,
    HierarchicalWeights,
    RetrievalConfig,
    ScoredAbstract,
    ScoredChunk,
    ScoredTheme,
    Subgraph,
    node_distribution,
    retrieve_background,
    retrieve_subgraph,
)

__version__ = "0.1.0"
