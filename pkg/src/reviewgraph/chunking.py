"""Sentence splitting and greedy semantic chunking.

A chunk is a maximal run of adjacent sentences whose similarity to the
growing chunk stays at or above a threshold, capped in characters and
sentence count and never crossing a (sub)section boundary. After every merge
the chunk is re-embedded from its full text, so a chunk's embedding is always
``embed(chunk.text)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .ingest import SourceDocument
from .providers import EmbeddingProvider, cosine

# Tokens (lowercased, trailing period removed) after which a period never ends
# a sentence. "et al." is covered by "al".
DEFAULT_ABBREVIATIONS = frozenset(
    {
        "al", "et al", "fig", "figs", "eq", "eqs", "tab", "sec", "i.e", "e.g",
        "cf", "vs", "resp", "dr", "prof", "mr", "mrs", "ms", "jr", "st",
    }
)

_MATH_SPAN_RE = re.compile(r"\$\$.*?\$\$|\$[^$\n]*?\$", re.S)
_BOUNDARY_RE = re.compile(r"[.?!][\"')\]]*\s+(?=[A-Z0-9])")
_LAST_TOKEN_RE = re.compile(r"([A-Za-z][A-Za-z.]*)$")


@dataclass(frozen=True)
class Sentence:
    index: int
    text: str
    section_path: tuple[str, ...] = ()


@dataclass(frozen=True)
class ChunkingConfig:
    # theta1 > 1 is allowed on purpose: it is the unreachable threshold that
    # forces one chunk per sentence.
    theta1: float = 0.60
    max_chunk_chars: int = 1200
    max_chunk_sentences: int = 10

    def __post_init__(self):
        if self.theta1 < 0.0:
            raise DataError("theta1 must be non-negative")
        if self.max_chunk_chars <= 0 or self.max_chunk_sentences <= 0:
            raise DataError("chunk size caps must be positive")


@dataclass(eq=False)
class Chunk:
    chunk_id: str
    sentence_indices: tuple[int, ...]
    text: str
    section_path: tuple[str, ...]
    embedding: np.ndarray


def split_sentences(
    text: str,
    abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS,
    section_path: tuple[str, ...] = (),
    start_index: int = 0,
) -> list[Sentence]:
    """Rule-based sentence splitter.

    Splits after '.', '?' or '!' (plus closing quotes/brackets) followed by
    whitespace and an uppercase letter or digit, except after a stop-listed
    abbreviation or a single capital initial, and never inside $...$ or
    $$...$$ math spans. Whitespace inside each sentence is collapsed.
    """
    if not text.strip():
        return []
    masked = [(m.start(), m.end()) for m in _MATH_SPAN_RE.finditer(text)]

    def in_math(pos: int) -> bool:
        return any(start <= pos < end for start, end in masked)

    cut_points = []
    for match in _BOUNDARY_RE.finditer(text):
        if in_math(match.start()):
            continue
        if text[match.start()] == "." and _is_abbreviation(text, match.start(), abbreviations):
            continue
        cut_points.append(match.end())

    sentences = []
    previous = 0
    for cut in cut_points + [len(text)]:
        piece = re.sub(r"\s+", " ", text[previous:cut]).strip()
        if piece:
            sentences.append(
                Sentence(index=start_index + len(sentences), text=piece, section_path=section_path)
            )
        previous = cut
    return sentences


def _is_abbreviation(text: str, period_pos: int, abbreviations: frozenset[str]) -> bool:
    match = _LAST_TOKEN_RE.search(text, 0, period_pos)
    if not match:
        return False
    token = match.group(1).rstrip(".")
    if token.lower() in abbreviations:
        return True
    return len(token) == 1 and token.isupper()  # single capital initial, "J. Smith"


def document_sentences(
    doc: SourceDocument,
    abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS,
    skip_headings: Iterable[str] = ("abstract", "references", "reference", "bibliography", "acknowledgments"),
) -> list[Sentence]:
    """Sentences of a document's body with heading-trail section paths.

    The abstract (it becomes the graph's dedicated node) and the reference
    listings are skipped, and the document-title heading is not part of any
    section path. Indices are contiguous across the whole document.
    """
    skip = {h.casefold() for h in skip_headings}
    sentences: list[Sentence] = []
    trail: list[tuple[int, str]] = []
    for section in doc.sections:
        if section.heading:
            trail = [(lvl, h) for lvl, h in trail if lvl < section.level]
            trail.append((section.level, section.heading))
        if section.heading.strip().casefold() in skip:
            continue
        if not section.body.strip():
            continue
        path = tuple(h for _, h in trail if h != doc.title) if trail else ()
        sentences.extend(
            split_sentences(section.body, abbreviations, section_path=path, start_index=len(sentences))
        )
    return sentences


def chunk_document(
    sentences: Sequence[Sentence],
    cfg: ChunkingConfig,
    provider: EmbeddingProvider,
) -> list[Chunk]:
    """Greedy left-to-right merge of sentences into chunks.

    A sentence joins the current chunk iff its embedding similarity to the
    current chunk text is >= theta1, the merged text stays within both size
    caps, and it shares the chunk's section path. The chunk embedding is
    recomputed from the concatenated text after every merge.
    """
    if not sentences:
        return []
    chunks: list[Chunk] = []

    def close(indices: list[int], text: str, path: tuple[str, ...], embedding: np.ndarray) -> None:
        chunks.append(
            Chunk(
                chunk_id=f"c{len(chunks)}",
                sentence_indices=tuple(indices),
                text=text,
                section_path=path,
                embedding=embedding,
            )
        )

    first = sentences[0]
    indices = [first.index]
    text = first.text
    path = first.section_path
    embedding = provider.embed(text)

    for sentence in sentences[1:]:
        similarity = cosine(provider.embed(sentence.text), embedding)
        merged_text = f"{text} {sentence.text}"
        if (
            similarity >= cfg.theta1
            and sentence.section_path == path
            and len(merged_text) <= cfg.max_chunk_chars
            and len(indices) < cfg.max_chunk_sentences
        ):
            indices.append(sentence.index)
            text = merged_text
            embedding = provider.embed(text)
        else:
            close(indices, text, path, embedding)
            indices = [sentence.index]
            text = sentence.text
            path = sentence.section_path
            embedding = provider.embed(text)
    close(indices, text, path, embedding)
    return chunks
