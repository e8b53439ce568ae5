"""Corpus loading: parsed-markdown papers, reference extraction, review-comment splitting.

The input boundary is UTF-8 markdown that has already been extracted from
PDFs elsewhere; parsing here is purely structural (headings, abstract,
references) and deterministic.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, ProviderError
from .providers import ChatProvider

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Section:
    heading: str
    level: int
    body: str


@dataclass(frozen=True)
class Reference:
    raw_entry: str
    title: str | None = None
    year: int | None = None


@dataclass(frozen=True)
class SourceDocument:
    doc_id: str
    title: str
    abstract_text: str
    sections: tuple[Section, ...]
    references: tuple[Reference, ...]


@dataclass(frozen=True)
class Query:
    """One extracted review comment."""

    query_id: str
    text: str
    kind: str  # strength | weakness | question | other
    char_length: int
    over_limit: bool = False


@dataclass
class Corpus:
    reviewed_paper: SourceDocument
    related_papers: list[SourceDocument] = field(default_factory=list)
    reviews: list[str] = field(default_factory=list)


_HEADING_RE = re.compile(r"^(#{1,6})\s+(.*?)\s*$")
_REF_MARKER_RE = re.compile(r"^\s*(\[\d+\]|\d+\.)\s*")
_YEAR_RE = re.compile(r"\b(19|20)\d{2}\b")


def parse_markdown(text: str, doc_id: str, reference_delimiter: str | None = None) -> SourceDocument:
    """Parse one markdown document into sections, abstract, and references.

    The abstract is the body of the first section whose heading equals
    "abstract" (case-insensitive), falling back to any text that precedes the
    first heading. References come from the first section whose heading
    contains "reference", split at blank lines or leading "[n]" / "n."
    markers; ``reference_delimiter`` (a regex) overrides that heuristic.
    """
    if not text.strip():
        raise DataError("empty document")

    sections: list[Section] = []
    current_heading: str | None = None
    current_level = 1
    buffer: list[str] = []

    def flush() -> None:
        body = "\n".join(buffer).strip("\n")
        if current_heading is None:
            if body.strip():
                sections.append(Section(heading="", level=1, body=body))
        else:
            sections.append(Section(heading=current_heading, level=current_level, body=body))
        buffer.clear()

    for line in text.splitlines():
        match = _HEADING_RE.match(line)
        if match:
            flush()
            current_heading = match.group(2)
            current_level = len(match.group(1))
        else:
            buffer.append(line)
    flush()

    abstract = ""
    for section in sections:
        if section.heading.strip().casefold() == "abstract":
            abstract = section.body.strip()
            break
    else:
        if sections and sections[0].heading == "":
            abstract = sections[0].body.strip()

    references: tuple[Reference, ...] = ()
    for section in sections:
        if "reference" in section.heading.casefold():
            references = tuple(_split_references(section.body, reference_delimiter))
            break

    title = doc_id
    for section in sections:
        if section.heading:
            title = section.heading
            break

    return SourceDocument(
        doc_id=doc_id,
        title=title,
        abstract_text=abstract,
        sections=tuple(sections),
        references=references,
    )


def _split_references(body: str, delimiter: str | None) -> list[Reference]:
    if delimiter:
        raw_entries = [part.strip() for part in re.split(delimiter, body, flags=re.M)]
    else:
        raw_entries = []
        current: list[str] = []
        for line in body.splitlines():
            if _REF_MARKER_RE.match(line):
                if current:
                    raw_entries.append("\n".join(current).strip())
                current = [line]
            elif not line.strip():
                if current:
                    raw_entries.append("\n".join(current).strip())
                current = []
            else:
                current.append(line)
        if current:
            raw_entries.append("\n".join(current).strip())
    return [_make_reference(entry) for entry in raw_entries if entry.strip()]


def _make_reference(raw_entry: str) -> Reference:
    year_match = _YEAR_RE.search(raw_entry)
    year = int(year_match.group(0)) if year_match else None
    rest = _REF_MARKER_RE.sub("", raw_entry).strip()
    # Authors end at a period following a lowercase letter; the next such
    # segment is usually the title. Best effort only.
    parts = re.split(r"(?<=[a-z])\.\s+", rest)
    title = parts[1].strip().rstrip(".") if len(parts) > 1 and parts[1].strip() else None
    return Reference(raw_entry=raw_entry, title=title, year=year)


# ---------------------------------------------------------------------------
# Review comments
# ---------------------------------------------------------------------------

_HEADER_RE = re.compile(
    r"^\W{0,8}(strengths?|weaknesses?|questions?)\b[\s:*]*$", re.IGNORECASE
)
_ITEM_RE = re.compile(r"^\s*(?:\d+[.)]\s+|[-*•]\s+)")
_VALID_KINDS = frozenset({"strength", "weakness", "question", "other"})


def _header_kind(word: str) -> str:
    word = word.lower()
    for kind in ("strength", "weakness", "question"):
        if word.startswith(kind):
            return kind
    return "other"

_EXTRACTION_PROMPT = """Extract the individual review comments from the peer review below.
Respond with a JSON array of objects, each {"text": <comment text>, "kind": <strength|weakness|question|other>}.
Keep every distinct comment as its own object and preserve the original order.

<REVIEW>
{review}
</REVIEW>"""


def split_review_fallback(review_text: str) -> list[tuple[str, str]]:
    """Deterministic review splitter: (kind, text) pairs from headered bullet lists.

    Items are numbered or bulleted lines under Strengths/Weaknesses/Questions
    headers; continuation lines attach to the current item; paragraphs without
    bullets count as single items. Text outside known headers gets kind
    "other".
    """
    comments: list[tuple[str, str]] = []
    kind = "other"
    current: list[str] = []

    def flush() -> None:
        text = " ".join(part.strip() for part in current if part.strip())
        if text:
            comments.append((kind, text))
        current.clear()

    for line in review_text.splitlines():
        header = _HEADER_RE.match(line.strip())
        if header:
            flush()
            kind = _header_kind(header.group(1))
            continue
        if _ITEM_RE.match(line):
            flush()
            current.append(_ITEM_RE.sub("", line))
        elif not line.strip():
            flush()
        else:
            current.append(line)
    flush()
    return comments


def extract_review_comments(
    review_text: str,
    chat: ChatProvider | None = None,
    max_chars: int | None = None,
) -> list[Query]:
    """Split one review into individual comment queries.

    With a chat provider the review is handed to the model and its JSON reply
    is parsed; without one, or when the provider is unreachable, the
    deterministic fallback splitter is used. Comments longer than
    ``max_chars`` are flagged, never dropped.
    """
    if not review_text.strip():
        raise DataError("review text must be non-empty")
    if chat is None:
        pairs = split_review_fallback(review_text)
    else:
        try:
            reply = chat.chat(_EXTRACTION_PROMPT.replace("{review}", review_text))
        except ProviderError as exc:
            logger.warning("chat provider unavailable (%s); using fallback splitter", exc)
            pairs = split_review_fallback(review_text)
        else:
            pairs = _parse_extraction_reply(reply)
    queries = []
    for i, (kind, text) in enumerate(pairs):
        queries.append(
            Query(
                query_id=f"q{i + 1}",
                text=text,
                kind=kind,
                char_length=len(text),
                over_limit=bool(max_chars is not None and len(text) > max_chars),
            )
        )
    return queries


def _parse_extraction_reply(reply: str) -> list[tuple[str, str]]:
    stripped = _strip_code_fences(reply)
    try:
        items = json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed extraction: {exc}") from exc
    if not isinstance(items, list):
        raise DataError("malformed extraction: expected a JSON array")
    pairs = []
    for item in items:
        if not isinstance(item, dict) or not str(item.get("text", "")).strip():
            raise DataError("malformed extraction: items need a non-empty 'text'")
        kind = str(item.get("kind", "other")).strip().lower()
        if kind not in _VALID_KINDS:
            kind = "other"
        pairs.append((kind, str(item["text"]).strip()))
    return pairs


def _strip_code_fences(text: str) -> str:
    match = re.search(r"```(?:json)?\s*\n(.*?)\n\s*```", text, re.S)
    return match.group(1) if match else text.strip()


# ---------------------------------------------------------------------------
# Corpus manifest
# ---------------------------------------------------------------------------


def load_corpus(manifest_path: str | Path) -> Corpus:
    """Load a corpus from a JSON manifest.

    Manifest shape: ``{"reviewed": path, "related": [path...], "reviews":
    [path...], "reference_delimiter": optional regex}``; paths are relative
    to the manifest file.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DataError(f"missing file: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid manifest {manifest_path}: {exc}") from exc
    if "reviewed" not in manifest:
        raise DataError(f"manifest {manifest_path} lacks a 'reviewed' entry")

    base = manifest_path.parent
    delimiter = manifest.get("reference_delimiter")

    def read_doc(rel_path: str) -> SourceDocument:
        path = base / rel_path
        if not path.exists():
            raise DataError(f"missing file: {path}")
        return parse_markdown(path.read_text(encoding="utf-8"), doc_id=path.stem, reference_delimiter=delimiter)

    reviewed = read_doc(manifest["reviewed"])
    if not reviewed.abstract_text:
        raise DataError(f"reviewed paper {reviewed.doc_id} has an empty abstract")

    related = [read_doc(rel) for rel in manifest.get("related", [])]
    seen: dict[str, str] = {reviewed.doc_id: manifest["reviewed"]}
    for doc, rel in zip(related, manifest.get("related", [])):
        if doc.doc_id in seen:
            raise DataError(f"duplicate doc_id: {doc.doc_id}")
        seen[doc.doc_id] = rel

    reviews = []
    for rel in manifest.get("reviews", []):
        path = base / rel
        if not path.exists():
            raise DataError(f"missing file: {path}")
        reviews.append(path.read_text(encoding="utf-8"))

    return Corpus(reviewed_paper=reviewed, related_papers=related, reviews=reviews)
