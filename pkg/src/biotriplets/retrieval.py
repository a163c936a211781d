"""Chunking, embedding, and top-K chunk selection for one candidate.

Long section text is split into an anchor chunk (at least 512 words,
guaranteed to contain the matched term) plus 128-word windows with a
32-word overlap over the rest. Chunks are embedded through an external
endpoint and ranked by cosine similarity against the yes/no question.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import requests

from .errors import (
    DimensionMismatch,
    EndpointUnavailable,
    MatchOutOfRange,
    UnknownRelationType,
    ZeroVector,
)

logger = logging.getLogger(__name__)

RELATION_PHRASES = {
    "manifestation": "an informative manifestation of",
    "diagnosis": "an informative diagnostic procedure for",
    "treatment": "an informative therapeutic procedure or drug for",
}


@dataclass(frozen=True)
class RetrievalConfig:
    anchor_min_words: int = 512
    chunk_words: int = 128
    overlap_words: int = 32
    top_k: int = 10

    def __post_init__(self):
        if self.overlap_words >= self.chunk_words:
            raise ValueError("overlap_words must be < chunk_words")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.anchor_min_words < self.chunk_words:
            raise ValueError("anchor_min_words must be >= chunk_words")


@dataclass(frozen=True)
class Chunk:
    text: str
    word_span: tuple[int, int]
    is_anchor: bool = False


def chunk_for_candidate(
    text: str, match_word_index: int, cfg: RetrievalConfig
) -> list[Chunk]:
    """Anchor chunk around the match plus overlapping windows over the rest.

    Every word of the input lands in at least one chunk; exactly one chunk
    is the anchor.
    """
    words = text.split()
    n = len(words)
    if not 0 <= match_word_index < n:
        raise MatchOutOfRange(f"word index {match_word_index} outside [0, {n})")

    if n <= cfg.anchor_min_words:
        return [Chunk(" ".join(words), (0, n), is_anchor=True)]

    size = cfg.anchor_min_words
    start = match_word_index - size // 2
    start = max(0, min(start, n - size))
    anchor = Chunk(" ".join(words[start : start + size]), (start, start + size), True)

    step = cfg.chunk_words - cfg.overlap_words

    def windows(lo: int, hi: int) -> list[Chunk]:
        out = []
        pos = lo
        while pos < hi:
            end = min(pos + cfg.chunk_words, hi)
            out.append(Chunk(" ".join(words[pos:end]), (pos, end)))
            if end >= hi:
                break
            pos += step
        return out

    return windows(0, start) + [anchor] + windows(start + size, n)


def build_query(head: str, relation_id: str, tail: str) -> str:
    """The yes/no question; used both for retrieval and as the final prompt."""
    try:
        phrase = RELATION_PHRASES[relation_id]
    except KeyError:
        raise UnknownRelationType(relation_id) from None
    return f"Is {head} {phrase} {tail}?"


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity undefined for an all-zero vector")
    return float(np.dot(a, b) / (na * nb))


def retrieve_top_k(
    query_vec: np.ndarray,
    chunks: list[tuple[Chunk, np.ndarray]],
    cfg: RetrievalConfig,
) -> list[Chunk]:
    """Up to top_k chunks by descending similarity; the anchor always makes it.

    Ties break toward the earlier word span.
    """
    scored = []
    for chunk, vec in chunks:
        scored.append((cosine_similarity(query_vec, vec), chunk))
    scored.sort(key=lambda sc: (-sc[0], sc[1].word_span[0]))
    selected = scored[: cfg.top_k]
    if not any(c.is_anchor for _, c in selected):
        anchor = next((sc for sc in scored if sc[1].is_anchor), None)
        if anchor is not None:
            selected[-1] = anchor
            selected.sort(key=lambda sc: (-sc[0], sc[1].word_span[0]))
    return [c for _, c in selected]


@dataclass
class EmbeddingEndpoint:
    base_url: str
    model: str
    batch_limit: int = 128
    max_retries: int = 2
    timeout: float = 60.0
    api_key: str = ""
    retry_backoff: float = 0.2
    session: requests.Session = field(default_factory=requests.Session, repr=False)

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        """Embed texts in input order, batching to the endpoint's limit."""
        vectors: list[np.ndarray] = []
        for i in range(0, len(texts), self.batch_limit):
            vectors.extend(self._embed_batch(texts[i : i + self.batch_limit]))
        dims = {v.shape[0] for v in vectors}
        if len(dims) > 1:
            raise DimensionMismatch(f"endpoint returned mixed dimensions: {sorted(dims)}")
        return vectors

    def _embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        payload = {"model": self.model, "input": texts}
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_err = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.retry_backoff * (2 ** (attempt - 1)))
            try:
                resp = self.session.post(
                    f"{self.base_url.rstrip('/')}/v1/embeddings",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_err = exc
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last_err = RuntimeError(f"HTTP {resp.status_code}")
                continue
            resp.raise_for_status()
            data = sorted(resp.json()["data"], key=lambda d: d["index"])
            return [np.asarray(d["embedding"], dtype=np.float64) for d in data]
        raise EndpointUnavailable(f"embedding endpoint: {last_err}")
