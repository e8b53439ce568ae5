"""Embedding and chat provider contracts, similarity functions, offline fakes, and caching.

Embeddings are plain 1-D ``numpy.float64`` arrays. Every provider exposes
``name`` (used as the cache namespace) and, for embedders, ``dim``. Two wire
clients speak a minimal OpenAI-style HTTP JSON shape; two deterministic fakes
make the whole pipeline runnable with no network at all.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import DataError, ProviderError, UsageError

logger = logging.getLogger(__name__)

Vector = np.ndarray


@dataclass(frozen=True)
class ProviderConfig:
    """Connection settings for one HTTP backend."""

    endpoint: str
    model_name: str
    dim: int = 0
    timeout: float = 30.0
    api_key_env: str = ""

    def validate(self, *, embedding: bool) -> None:
        if self.timeout <= 0:
            raise UsageError("provider timeout must be positive")
        if embedding and self.dim <= 0:
            raise UsageError("embedding provider dim must be positive")


@dataclass(frozen=True)
class DecodeParams:
    """Chat decoding settings; temperature 0 keeps runs as reproducible as the backend allows."""

    temperature: float = 0.0
    max_tokens: int | None = None


class EmbeddingProvider(Protocol):
    name: str
    dim: int

    def embed(self, text: str) -> Vector: ...


class ChatProvider(Protocol):
    name: str

    def chat(self, prompt: str, decode: DecodeParams | None = None) -> str: ...


# ---------------------------------------------------------------------------
# Similarity
# ---------------------------------------------------------------------------


def cosine(u: Vector, v: Vector) -> float:
    """Cosine similarity in [-1, 1]; 0.0 when either vector has zero norm.

    Identical non-zero inputs return exactly 1.0 (the generic formula can
    land one ulp below 1 and callers rely on the identity case).
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DataError(f"embedding dim mismatch: {u.shape} vs {v.shape}")
    nu = float(np.dot(u, u))
    nv = float(np.dot(v, v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    if np.array_equal(u, v):
        return 1.0
    return float(np.dot(u, v) / math.sqrt(nu * nv))


def rectified_similarity(u: Vector, v: Vector) -> float:
    """max(cosine, 0): the non-negative similarity used for probability weights."""
    return max(cosine(u, v), 0.0)


# ---------------------------------------------------------------------------
# Deterministic fake embedder
# ---------------------------------------------------------------------------


_TOKEN_RE = re.compile(r"[a-z0-9]+")


class HashEmbedder:
    """Offline embedder: token-hash bag-of-words into ``dim`` buckets, L2-normalized.

    Fully deterministic across processes (sha256 token hashing, no
    interpreter hash salt) and a pure function of the token multiset.
    ``scale`` multiplies the normalized output; rankings built on cosine are
    unaffected by it, which tests exploit.
    """

    def __init__(self, dim: int = 64, scale: float = 1.0):
        if dim <= 0:
            raise UsageError("dim must be positive")
        self.dim = dim
        self.scale = scale
        self.name = f"hash-{dim}"
        self.calls = 0

    def embed(self, text: str) -> Vector:
        stripped = text.strip()
        if not stripped:
            raise DataError("cannot embed empty text")
        self.calls += 1
        counts = np.zeros(self.dim, dtype=np.float64)
        tokens = _TOKEN_RE.findall(stripped.lower())
        if not tokens:
            # No word-like content (e.g. pure punctuation): hash the raw text
            # as a single pseudo-token so the vector is still well-defined.
            tokens = [stripped]
        for token in tokens:
            bucket = _token_bucket(token, self.dim)
            counts[bucket] += 1.0
        vec = counts / np.linalg.norm(counts)
        if self.scale != 1.0:
            vec = vec * self.scale
        return vec


def _token_bucket(token: str, dim: int) -> int:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % dim


# ---------------------------------------------------------------------------
# Embedding cache
# ---------------------------------------------------------------------------


class CachedEmbedder:
    """Memoizes ``embed`` by (provider name, text hash); optionally persisted to disk.

    A hit performs zero backend calls. Writes are serialized under one lock
    and disk files are written atomically (tmp + rename), so concurrent
    embeds of the same text are safe.
    """

    def __init__(self, backend: EmbeddingProvider, cache_dir: str | Path | None = None):
        self.backend = backend
        self.name = backend.name
        self.dim = backend.dim
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._memory: dict[str, Vector] = {}
        self._lock = threading.Lock()

    def _key(self, text: str) -> str:
        payload = f"{self.name}\x00{text}".encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    def embed(self, text: str) -> Vector:
        key = self._key(text)
        with self._lock:
            hit = self._memory.get(key)
        if hit is not None:
            return hit
        if self.cache_dir is not None:
            path = self.cache_dir / f"{key}.npy"
            if path.exists():
                vec = np.load(path)
                with self._lock:
                    self._memory[key] = vec
                return vec
        vec = self.backend.embed(text)
        with self._lock:
            self._memory[key] = vec
            if self.cache_dir is not None:
                tmp = self.cache_dir / f"{key}.tmp"
                with open(tmp, "wb") as fh:
                    np.save(fh, vec)
                os.replace(tmp, self.cache_dir / f"{key}.npy")
        return vec


# ---------------------------------------------------------------------------
# HTTP wire clients
# ---------------------------------------------------------------------------


def _auth_headers(config: ProviderConfig) -> dict[str, str]:
    headers = {"Content-Type": "application/json"}
    if config.api_key_env:
        key = os.environ.get(config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
    return headers


def _post_json(session, config: ProviderConfig, payload: dict) -> dict:
    import requests

    try:
        response = session.post(
            config.endpoint,
            json=payload,
            headers=_auth_headers(config),
            timeout=config.timeout,
        )
    except requests.RequestException as exc:
        raise ProviderError(f"transport failure: {exc}", retryable=True) from exc
    if response.status_code >= 500:
        raise ProviderError(f"backend error {response.status_code}", retryable=True)
    if response.status_code != 200:
        raise ProviderError(f"backend rejected request: {response.status_code}")
    try:
        return response.json()
    except ValueError as exc:
        raise ProviderError(f"backend returned non-JSON body: {exc}", retryable=True) from exc


class HttpEmbeddingClient:
    """Embedding backend: POST {model, input:[texts]} -> {data:[{embedding:[...]}]}."""

    def __init__(self, config: ProviderConfig, session=None):
        config.validate(embedding=True)
        self.config = config
        self.name = config.model_name
        self.dim = config.dim
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def embed(self, text: str) -> Vector:
        if not text.strip():
            raise DataError("cannot embed empty text")
        body = _post_json(self._session, self.config, {"model": self.config.model_name, "input": [text]})
        try:
            values = body["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed embedding response: {exc}", retryable=True) from exc
        vec = np.asarray(values, dtype=np.float64)
        if vec.ndim != 1 or vec.shape[0] != self.dim:
            raise UsageError(
                f"backend returned dim {vec.shape} but provider is configured for dim {self.dim}"
            )
        if not np.all(np.isfinite(vec)):
            raise ProviderError("backend returned non-finite embedding values", retryable=True)
        return vec


class HttpChatClient:
    """Chat backend: POST {model, messages:[...]} -> {choices:[{message:{content}}]}."""

    def __init__(self, config: ProviderConfig, session=None):
        config.validate(embedding=False)
        self.config = config
        self.name = config.model_name
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def chat(self, prompt: str, decode: DecodeParams | None = None) -> str:
        if not prompt.strip():
            raise DataError("prompt must be non-empty")
        decode = decode or DecodeParams()
        payload: dict = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": decode.temperature,
        }
        if decode.max_tokens is not None:
            payload["max_tokens"] = decode.max_tokens
        body = _post_json(self._session, self.config, payload)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat response: {exc}", retryable=True) from exc
        if not content:
            raise ProviderError("empty completion", retryable=True)
        return content


# ---------------------------------------------------------------------------
# Deterministic fake chat
# ---------------------------------------------------------------------------

PROFILE_STRICT = "strict"
PROFILE_AUTO = "auto"
PROFILE_EXPLANATION = "explanation"
PROFILE_THEMES = "themes"
PROFILE_JUDGE = "judge"

_EXCERPT_LABEL_RE = re.compile(r"\(excerpt from ([^)]+)\)")
_RESPONSE_BLOCK_RE = re.compile(r"Response A:\n(.*?)\n\nResponse B:\n(.*?)\n\nWhich", re.S)
_TITLE_LINE_RE = re.compile(r"^Title:\s*(.+)$", re.M)
_REVIEW_BLOCK_RE = re.compile(r"<REVIEW>\n(.*)\n</REVIEW>", re.S)


def _prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class FakeChatProvider:
    """Offline chat provider for hermetic runs and tests.

    Canned replies registered against an exact prompt always win. With the
    ``strict`` profile an unregistered prompt is an error; other profiles
    synthesize a deterministic, format-conforming reply (``auto`` picks the
    synthesizer by inspecting the prompt structure).
    """

    def __init__(self, profile: str = PROFILE_STRICT):
        self.profile = profile
        self.name = f"fake-chat-{profile}"
        self.calls = 0
        self._canned: dict[str, deque[str]] = {}

    def register(self, prompt: str, reply: str) -> None:
        self._canned.setdefault(_prompt_digest(prompt), deque()).append(reply)

    def register_sequence(self, prompt: str, replies: Sequence[str]) -> None:
        self._canned.setdefault(_prompt_digest(prompt), deque()).extend(replies)

    def chat(self, prompt: str, decode: DecodeParams | None = None) -> str:
        self.calls += 1
        queue = self._canned.get(_prompt_digest(prompt))
        if queue:
            # Keep the last registered reply around for repeated identical calls.
            return queue.popleft() if len(queue) > 1 else queue[0]
        if self.profile == PROFILE_STRICT:
            raise ProviderError("no canned response for prompt")
        if self.profile == PROFILE_EXPLANATION:
            return self._synthesize_explanation(prompt)
        if self.profile == PROFILE_THEMES:
            return self._synthesize_themes(prompt)
        if self.profile == PROFILE_JUDGE:
            return self._synthesize_verdict(prompt)
        if self.profile == PROFILE_AUTO:
            return self._dispatch(prompt)
        raise UsageError(f"unknown fake chat profile: {self.profile}")

    def _dispatch(self, prompt: str) -> str:
        if "<PAPER HIGHLIGHTS>" in prompt:
            return self._synthesize_explanation(prompt)
        if '"theme"' in prompt and "JSON array" in prompt:
            return self._synthesize_themes(prompt)
        if "Response A:" in prompt and "Response B:" in prompt:
            return self._synthesize_verdict(prompt)
        if '"kind"' in prompt and "<REVIEW>" in prompt:
            return self._synthesize_extraction(prompt)
        raise ProviderError("fake chat cannot infer a reply for this prompt")

    def _synthesize_explanation(self, prompt: str) -> str:
        digest = _prompt_digest(prompt)
        labels = []
        for label in _EXCERPT_LABEL_RE.findall(prompt):
            if label not in labels:
                labels.append(label)
        count = 1 + int(digest[:2], 16) % 3
        lines = []
        for i in range(1, count + 1):
            label = labels[(i - 1) % len(labels)] if labels else f"Section {i}"
            lines.append(f"- **Evidence {i} ({label})**:")
            lines.append(f"    The retrieved passage {digest[:8]}-{i} supports the comment.")
            lines.append("")
        lines.append("- **Summary**:")
        lines.append(f"Synthetic reasoning {digest[:8]} linking the evidence to the comment.")
        return "\n".join(lines)

    def _synthesize_themes(self, prompt: str) -> str:
        titles = [t.strip() for t in _TITLE_LINE_RE.findall(prompt)]
        if not titles:
            raise ProviderError("fake chat found no paper titles in theme prompt")
        groups: list[list[str]] = [[] for _ in range(min(3, len(titles)))]
        for i, title in enumerate(titles):
            groups[i % len(groups)].append(title)
        themes = []
        for i, group in enumerate(groups):
            keywords = _distinct_keywords(group)
            themes.append({"theme": f"Theme {i + 1}: {keywords}", "papers": group})
        return json.dumps(themes)

    def _synthesize_verdict(self, prompt: str) -> str:
        match = _RESPONSE_BLOCK_RE.search(prompt)
        if not match:
            raise ProviderError("fake chat found no response blocks in judge prompt")
        # Content-keyed verdict: the same pair of texts gets the same winner
        # no matter which is presented first.
        digest_a = hashlib.sha256(match.group(1).encode("utf-8")).hexdigest()
        digest_b = hashlib.sha256(match.group(2).encode("utf-8")).hexdigest()
        return "A" if digest_a <= digest_b else "B"

    def _synthesize_extraction(self, prompt: str) -> str:
        match = _REVIEW_BLOCK_RE.search(prompt)
        if not match:
            raise ProviderError("fake chat found no review block in extraction prompt")
        from .ingest import split_review_fallback

        comments = [{"text": text, "kind": kind} for kind, text in split_review_fallback(match.group(1))]
        return json.dumps(comments)


_KEYWORD_STOPWORDS = frozenset(
    "a an and the for of on in with via from to by using towards".split()
)


def _distinct_keywords(titles: Sequence[str], limit: int = 2) -> str:
    seen: list[str] = []
    for title in titles:
        for token in _TOKEN_RE.findall(title.lower()):
            if len(token) >= 4 and token not in _KEYWORD_STOPWORDS and token not in seen:
                seen.append(token)
            if len(seen) >= limit:
                return ", ".join(seen)
    return ", ".join(seen) if seen else "general"
