"""Prompt assembly, generation, and parsing of structured explanations.

The prompt template ships as a package asset and is filled, never edited, at
runtime: the rendered prompt is byte-identical to the template around the
three payload blocks. Completions follow an Evidence/Summary layout that
``parse_explanation`` turns into structured items and ``render_explanation``
writes back out; parse(render(parse(x))) is a fixed point.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from importlib import resources

from .errors import DataError, ProviderError
from .ingest import Query
from .providers import ChatProvider, DecodeParams

DELIMITERS = (
    "<REVIEW>",
    "</REVIEW>",
    "<PAPER HIGHLIGHTS>",
    "</PAPER HIGHLIGHTS>",
    "<RELATED WORK>",
    "</RELATED WORK>",
)

_SLOT_RE = re.compile(r"\{(review|paper_highlights|related_work)\}")


def _load_template() -> str:
    return resources.files("reviewgraph").joinpath("templates/explanation_prompt.txt").read_text("utf-8")


@dataclass(eq=False)
class PromptBundle:
    review_text: str
    paper_highlights: str
    related_work: str
    rendered: str

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.rendered.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class EvidenceItem:
    index: int
    section_label: str
    reasoning: str


@dataclass(frozen=True)
class Explanation:
    query_id: str
    evidence: tuple[EvidenceItem, ...]
    summary: str
    raw: str = field(default="", compare=False)


def assemble_prompt(query: Query, smg_evidence: str, hbg_evidence: str) -> PromptBundle:
    """Fill the generation template with the review comment and both evidence blocks.

    Payloads may not contain any delimiter string, so each delimiter occurs
    as a whole line exactly once in the rendered prompt (the instruction
    prose mentions delimiters inline, never on a line of their own).
    """
    if not query.text.strip():
        raise DataError("query text must be non-empty")
    payloads = {
        "review": query.text,
        "paper_highlights": smg_evidence,
        "related_work": hbg_evidence,
    }
    for name, payload in payloads.items():
        for delimiter in DELIMITERS:
            if delimiter in payload:
                raise DataError(f"delimiter collision: {delimiter!r} inside {name}")

    template = _load_template()
    parts = _SLOT_RE.split(template)
    rendered = "".join(payloads[p] if p in payloads else p for p in parts)

    for delimiter in DELIMITERS:
        if sum(1 for line in rendered.splitlines() if line == delimiter) != 1:
            raise DataError(f"template corrupt: delimiter {delimiter!r} not unique")
    return PromptBundle(
        review_text=query.text,
        paper_highlights=smg_evidence,
        related_work=hbg_evidence,
        rendered=rendered,
    )


def generate_explanation(bundle: PromptBundle, chat: ChatProvider, decode: DecodeParams | None = None) -> str:
    """Run the prompt; one retry on an empty completion."""
    decode = decode or DecodeParams()
    for attempt in range(2):
        try:
            reply = chat.chat(bundle.rendered, decode)
        except ProviderError as exc:
            if attempt == 0 and exc.retryable:
                continue
            raise
        if reply.strip():
            return reply
    raise ProviderError("empty completion after retry")


_EVIDENCE_RE = re.compile(
    r"^[ \t]*(?:[-*]\s*)?\*\*Evidence\s+(\d+)\s*\(([^)]*)\)\s*\*\*\s*:?", re.M
)
_SUMMARY_RE = re.compile(r"^[ \t]*(?:[-*]\s*)?\*\*Summary\s*\*\*\s*:?", re.M)


def parse_explanation(text: str, query_id: str) -> Explanation:
    """Parse an Evidence/Summary completion.

    Evidence blocks are headed "**Evidence N (label)**:" with N counting up
    from 1; list dashes and surrounding whitespace are tolerated. Zero
    evidence items are acceptable, a missing or empty Summary is not.
    """
    summary_match = _SUMMARY_RE.search(text)
    if not summary_match:
        raise DataError("missing summary")
    summary = text[summary_match.end() :].strip()
    if not summary:
        raise DataError("missing summary")

    head = text[: summary_match.start()]
    matches = list(_EVIDENCE_RE.finditer(head))
    evidence = []
    for pos, match in enumerate(matches):
        number = int(match.group(1))
        if number != pos + 1:
            raise DataError(f"malformed evidence list: expected index {pos + 1}, found {number}")
        end = matches[pos + 1].start() if pos + 1 < len(matches) else len(head)
        reasoning = head[match.end() : end].strip()
        reasoning = re.sub(r"\s+", " ", reasoning).strip()
        if not reasoning:
            raise DataError(f"malformed evidence list: evidence {number} has no reasoning")
        evidence.append(EvidenceItem(index=number, section_label=match.group(2).strip(), reasoning=reasoning))
    return Explanation(query_id=query_id, evidence=tuple(evidence), summary=summary, raw=text)


def render_explanation(explanation: Explanation) -> str:
    """Canonical text form of a parsed explanation (the parser's fixed point)."""
    lines = []
    for item in explanation.evidence:
        lines.append(f"- **Evidence {item.index} ({item.section_label})**:")
        lines.append(f"    {item.reasoning}")
        lines.append("")
    lines.append("- **Summary**:")
    lines.append(explanation.summary)
    return "\n".join(lines)
