"""Prompt assembly, chat endpoint client, and verdict parsing.

Each candidate becomes one binary question answered by a chat model. The
reply must be a JSON object with "answer" (Yes/No) and "reason"; the
reason is stored verbatim as the evidential record. Replies with no
recoverable answer JSON become Judgment(answer="Malformed") rather than
errors.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import requests

from .errors import EmptyContext, EndpointUnavailable, ExemplarConfigError
from .retrieval import Chunk, build_query

logger = logging.getLogger(__name__)

EXEMPLARS_PER_RELATION = 3

SYSTEM_PREAMBLE = (
    "You are a careful biomedical relation classifier. The context below was "
    "extracted from a web page whose main title is: {tail}. Everything on that "
    "page describes the main title, even where the title itself is not "
    "mentioned. List items appear between marker tokens such as || or |1|. "
    "Before answering, first consider what the highlighted biomedical term "
    "means. Then decide the question and reply with exactly one JSON object "
    'with two keys: "answer" (either "Yes" or "No") and "reason" (a short '
    "justification grounded in the context or established biomedical "
    "knowledge). Output nothing except that JSON object."
)


@dataclass(frozen=True)
class CandidatePair:
    candidate_id: str
    site_id: str
    page_url: str
    relation: str
    head_surface: str
    head_concept_id: str
    head_semantic_types: frozenset[str]
    tail_title: str
    section_path: str
    match_word_index: int
    section_text: str

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["head_semantic_types"] = sorted(self.head_semantic_types)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CandidatePair":
        d = dict(d)
        d["head_semantic_types"] = frozenset(d["head_semantic_types"])
        return cls(**d)


@dataclass(frozen=True)
class Exemplar:
    question: str
    answer_json: str


@dataclass
class ExemplarSet:
    by_relation: dict[str, list[Exemplar]]

    def for_relation(self, relation: str) -> list[Exemplar]:
        try:
            return self.by_relation[relation]
        except KeyError:
            raise ExemplarConfigError(f"no exemplars for relation {relation!r}") from None


def load_exemplars(path: Optional[str | Path] = None) -> ExemplarSet:
    """Load the few-shot exemplar file; exactly three per relation."""
    if path is None:
        raw = resources.files("biotriplets.data").joinpath("exemplars.json").read_text()
    else:
        raw = Path(path).read_text(encoding="utf-8")
    data = json.loads(raw)
    by_relation = {}
    for relation, items in data.items():
        if len(items) != EXEMPLARS_PER_RELATION:
            raise ExemplarConfigError(
                f"relation {relation!r} has {len(items)} exemplars, "
                f"expected {EXEMPLARS_PER_RELATION}"
            )
        by_relation[relation] = [
            Exemplar(item["question"], json.dumps(
                {"answer": item["answer"], "reason": item["reason"]},
                ensure_ascii=False,
            ))
            for item in items
        ]
    return ExemplarSet(by_relation)


@dataclass(frozen=True)
class PromptBundle:
    system_preamble: str
    exemplars: tuple[Exemplar, ...]
    context_block: str
    question: str

    def to_messages(self) -> list[dict]:
        messages = [{"role": "system", "content": self.system_preamble}]
        for ex in self.exemplars:
            messages.append({"role": "user", "content": ex.question})
            messages.append({"role": "assistant", "content": ex.answer_json})
        messages.append(
            {"role": "user", "content": f"{self.context_block}\n\n{self.question}"}
        )
        return messages


def build_prompt(
    candidate: CandidatePair,
    retrieved: list[Chunk],
    exemplars: ExemplarSet,
) -> PromptBundle:
    if not retrieved:
        raise EmptyContext(f"no retrieved chunks for {candidate.candidate_id}")
    lines = [f"main title: {candidate.tail_title}"]
    for chunk in retrieved:
        lines.append(f"[{candidate.section_path}]")
        lines.append(chunk.text)
    return PromptBundle(
        system_preamble=SYSTEM_PREAMBLE.format(tail=candidate.tail_title),
        exemplars=tuple(exemplars.for_relation(candidate.relation)),
        context_block="\n".join(lines),
        question=build_query(
            candidate.head_surface, candidate.relation, candidate.tail_title
        ),
    )


@dataclass(frozen=True)
class Judgment:
    answer: str  # "Yes" | "No" | "Malformed"
    reason: str
    raw_output: str
    latency_ms: int = 0
    model_id: str = ""


def parse_judgment(raw: str, latency_ms: int = 0, model_id: str = "") -> Judgment:
    """Recover the first answer JSON from the reply; total, never raises.

    Scans every '{' for a balanced JSON object carrying string "answer"
    and "reason" fields with a Yes/No answer. Anything else is Malformed
    with the raw output preserved.
    """
    decoder = json.JSONDecoder()
    pos = 0
    while True:
        idx = raw.find("{", pos)
        if idx < 0:
            break
        try:
            obj, _ = decoder.raw_decode(raw, idx)
        except (ValueError, RecursionError):
            pos = idx + 1
            continue
        if (
            isinstance(obj, dict)
            and isinstance(obj.get("answer"), str)
            and isinstance(obj.get("reason"), str)
        ):
            answer = obj["answer"].strip().lower()
            if answer in ("yes", "no"):
                return Judgment(
                    answer=answer.capitalize(),
                    reason=obj["reason"],
                    raw_output=raw,
                    latency_ms=latency_ms,
                    model_id=model_id,
                )
        pos = idx + 1
    return Judgment(
        answer="Malformed", reason="", raw_output=raw,
        latency_ms=latency_ms, model_id=model_id,
    )


class _RateLimiter:
    """Simple requests-per-minute gate shared by worker threads."""

    def __init__(self, per_minute: int):
        self.interval = 60.0 / per_minute if per_minute > 0 else 0.0
        self.lock = threading.Lock()
        self.next_at = 0.0

    def wait(self):
        if self.interval <= 0:
            return
        with self.lock:
            now = time.monotonic()
            delay = self.next_at - now
            self.next_at = max(now, self.next_at) + self.interval
        if delay > 0:
            time.sleep(delay)


@dataclass
class ChatEndpoint:
    base_url: str
    model: str
    max_retries: int = 2
    max_concurrency: int = 4
    requests_per_minute: int = 0
    timeout: float = 120.0
    api_key: str = ""
    max_tokens: int = 512
    temperature: float = 0.0
    seed: Optional[int] = None
    retry_backoff: float = 0.2

    def __post_init__(self):
        self._session = requests.Session()
        self._semaphore = threading.BoundedSemaphore(self.max_concurrency)
        self._limiter = _RateLimiter(self.requests_per_minute)

    def complete(self, messages: list[dict]) -> tuple[str, int]:
        """Returns (reply text, latency ms). Retries transport/5xx/429 errors."""
        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        if self.seed is not None:
            payload["seed"] = self.seed
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_err = None
        started = time.monotonic()
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.retry_backoff * (2 ** (attempt - 1)))
            self._limiter.wait()
            with self._semaphore:
                try:
                    resp = self._session.post(
                        f"{self.base_url.rstrip('/')}/v1/chat/completions",
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
            content = resp.json()["choices"][0]["message"]["content"]
            latency = int((time.monotonic() - started) * 1000)
            return content, latency
        raise EndpointUnavailable(f"chat endpoint: {last_err}")


def classify(
    candidate: CandidatePair,
    retrieved: list[Chunk],
    endpoint: ChatEndpoint,
    exemplars: ExemplarSet,
) -> Judgment:
    bundle = build_prompt(candidate, retrieved, exemplars)
    content, latency = endpoint.complete(bundle.to_messages())
    return parse_judgment(content, latency_ms=latency, model_id=endpoint.model)
