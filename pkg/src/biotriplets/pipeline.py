"""End-to-end orchestration: candidates, classification fan-out, triplets.

Candidates are one per (head concept, relation, page); classification
progress is journaled to an append-only JSONL file keyed by candidate id,
so an interrupted run resumes without re-querying finished candidates.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .classifier import CandidatePair, ChatEndpoint, ExemplarSet, Judgment, classify
from .docmodel import WebDocument, flatten_section_text, section_path
from .errors import EndpointUnavailable
from .matcher import MatcherAutomaton, match_terms, semantic_filter
from .retrieval import (
    EmbeddingEndpoint,
    RetrievalConfig,
    build_query,
    chunk_for_candidate,
    retrieve_top_k,
)

logger = logging.getLogger(__name__)

DEFAULT_SEMANTIC_TYPES = {
    "manifestation": {"Sign, Symptom, or Finding"},
    "diagnosis": {"Diagnostic Procedure", "Laboratory Procedure"},
    "treatment": {"Therapeutic or Preventive Procedure", "Chemical or Drug"},
}


@dataclass(frozen=True)
class RelationType:
    id: str
    phrase: str
    allowed_semantic_types: frozenset[str]


def default_relations() -> list[RelationType]:
    from .retrieval import RELATION_PHRASES

    return [
        RelationType(rid, RELATION_PHRASES[rid], frozenset(types))
        for rid, types in DEFAULT_SEMANTIC_TYPES.items()
    ]


@dataclass(frozen=True)
class RelationTriplet:
    head_concept_id: str
    head_surface: str
    relation: str
    tail_title: str
    site_id: str
    page_url: str
    section_path: str
    reason: str
    model_id: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def candidate_id(site_id: str, page_url: str, relation: str, concept_id: str) -> str:
    key = f"{site_id}\x00{page_url}\x00{relation}\x00{concept_id}"
    return hashlib.sha1(key.encode("utf-8")).hexdigest()[:16]


def enumerate_candidates(
    docs: Iterable[WebDocument],
    automaton: MatcherAutomaton,
    relations: list[RelationType],
) -> list[CandidatePair]:
    """One candidate per (head concept, relation, page), anchored at the
    first mention on the page."""
    candidates = []
    seen: set[tuple[str, str, str]] = set()
    for doc in docs:
        for section in doc.walk_sections():
            if not section.text:
                continue
            path = section_path(doc, section)
            matches = match_terms(automaton, section.text, section_ref=path)
            if not matches:
                continue
            flat = flatten_section_text(section)
            for relation in relations:
                for match in semantic_filter(matches, relation):
                    key = (doc.page_url, relation.id, match.concept_id)
                    if key in seen:
                        continue
                    seen.add(key)
                    # index of the whitespace token containing the match
                    # start; the flattened section text begins with the
                    # section's own text, so indexes carry over
                    start = match.span[0]
                    word_index = len(section.text[:start].split())
                    if start > 0 and not section.text[start - 1].isspace():
                        word_index -= 1
                    candidates.append(
                        CandidatePair(
                            candidate_id=candidate_id(
                                doc.site_id, doc.page_url, relation.id, match.concept_id
                            ),
                            site_id=doc.site_id,
                            page_url=doc.page_url,
                            relation=relation.id,
                            head_surface=match.surface,
                            head_concept_id=match.concept_id,
                            head_semantic_types=match.semantic_types,
                            tail_title=doc.main_title,
                            section_path=path,
                            match_word_index=word_index,
                            section_text=flat,
                        )
                    )
    return candidates


def write_candidates(candidates: Iterable[CandidatePair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in candidates:
            fh.write(json.dumps(c.to_dict(), ensure_ascii=False) + "\n")


def read_candidates(path: str | Path) -> list[CandidatePair]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(CandidatePair.from_dict(json.loads(line)))
    return out


# --------------------------------------------------------------------------
# Extraction run with append-only journal.


@dataclass
class CellCounts:
    candidates: int = 0
    positives: int = 0
    negatives: int = 0
    malformed: int = 0

    @property
    def positive_rate(self) -> float:
        return self.positives / self.candidates if self.candidates else 0.0


@dataclass
class ExtractionReport:
    relations: list[str]
    cells: dict[tuple[str, str], CellCounts] = field(default_factory=dict)
    pages: dict[str, int] = field(default_factory=dict)

    def cell(self, site_id: str, relation: str) -> CellCounts:
        return self.cells.setdefault((site_id, relation), CellCounts())

    @property
    def totals(self) -> CellCounts:
        total = CellCounts()
        for c in self.cells.values():
            total.candidates += c.candidates
            total.positives += c.positives
            total.negatives += c.negatives
            total.malformed += c.malformed
        return total


@dataclass
class ExtractionResult:
    triplets: list[RelationTriplet]
    report: ExtractionReport
    malformed: list[dict]
    requests_issued: int


class Journal:
    """Append-only JSONL of finished candidates, the resume checkpoint."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def load(self) -> dict[str, dict]:
        done = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                    except ValueError:
                        continue  # torn tail line from a killed run
                    done[rec["candidate_id"]] = rec
        return done

    def append(self, record: dict) -> None:
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
                fh.flush()


def _process_candidate(
    candidate: CandidatePair,
    chat: ChatEndpoint,
    embedder: EmbeddingEndpoint,
    retrieval_cfg: RetrievalConfig,
    exemplars: ExemplarSet,
) -> Judgment:
    chunks = chunk_for_candidate(
        candidate.section_text, candidate.match_word_index, retrieval_cfg
    )
    query = build_query(
        candidate.head_surface, candidate.relation, candidate.tail_title
    )
    vectors = embedder.embed([query] + [c.text for c in chunks])
    retrieved = retrieve_top_k(vectors[0], list(zip(chunks, vectors[1:])), retrieval_cfg)
    return classify(candidate, retrieved, chat, exemplars)


def run_extraction(
    candidates: list[CandidatePair],
    chat: ChatEndpoint,
    embedder: EmbeddingEndpoint,
    retrieval_cfg: RetrievalConfig,
    exemplars: ExemplarSet,
    journal_path: str | Path,
    relations: Optional[list[str]] = None,
    workers: int = 4,
    limit: Optional[int] = None,
    deterministic: bool = False,
) -> ExtractionResult:
    """Classify every candidate not already journaled, then aggregate.

    `limit` caps how many pending candidates this run processes; the rest
    stay pending for a later resume. Endpoint failure aborts with the
    journal intact.
    """
    journal = Journal(journal_path)
    done = journal.load()
    pending = [c for c in candidates if c.candidate_id not in done]
    if limit is not None:
        pending = pending[:limit]

    requests_issued = 0
    abort: list[BaseException] = []
    lock = threading.Lock()

    def work(candidate: CandidatePair) -> None:
        nonlocal requests_issued
        judgment = _process_candidate(
            candidate, chat, embedder, retrieval_cfg, exemplars
        )
        record = {
            "candidate_id": candidate.candidate_id,
            "answer": judgment.answer,
            "reason": judgment.reason,
            "model_id": judgment.model_id,
        }
        if not deterministic:
            record["latency_ms"] = judgment.latency_ms
        journal.append(record)
        with lock:
            requests_issued += 1

    if pending:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(work, c) for c in pending]
            done_set, not_done = wait(futures, return_when=FIRST_EXCEPTION)
            for fut in not_done:
                fut.cancel()
            for fut in done_set:
                exc = fut.exception()
                if exc is not None:
                    abort.append(exc)
    if abort:
        raise abort[0]

    done = journal.load()
    relation_ids = relations or sorted({c.relation for c in candidates})
    report = ExtractionReport(relations=list(relation_ids))
    triplets: list[RelationTriplet] = []
    malformed: list[dict] = []
    pages: dict[str, set[str]] = {}

    for candidate in candidates:
        pages.setdefault(candidate.site_id, set()).add(candidate.page_url)
        rec = done.get(candidate.candidate_id)
        if rec is None:
            continue  # still pending (limited run)
        cell = report.cell(candidate.site_id, candidate.relation)
        cell.candidates += 1
        answer = rec["answer"]
        if answer == "Yes":
            cell.positives += 1
            triplets.append(
                RelationTriplet(
                    head_concept_id=candidate.head_concept_id,
                    head_surface=candidate.head_surface,
                    relation=candidate.relation,
                    tail_title=candidate.tail_title,
                    site_id=candidate.site_id,
                    page_url=candidate.page_url,
                    section_path=candidate.section_path,
                    reason=rec["reason"],
                    model_id=rec["model_id"],
                )
            )
        elif answer == "No":
            cell.negatives += 1
        else:
            cell.malformed += 1
            malformed.append({"candidate_id": candidate.candidate_id, **rec})
    report.pages = {site: len(urls) for site, urls in pages.items()}
    return ExtractionResult(triplets, report, malformed, requests_issued)


# --------------------------------------------------------------------------
# Dedup and reporting.


def dedupe_triplets(
    triplets: list[RelationTriplet],
    site_priority: Optional[list[str]] = None,
) -> tuple[list[RelationTriplet], int]:
    """One triplet per (head concept, relation, case-folded tail title).

    Provenance comes from the earliest site in the priority order;
    returns (deduped triplets, duplicate count).
    """
    priority = {site: i for i, site in enumerate(site_priority or [])}
    best: dict[tuple[str, str, str], tuple[int, int, RelationTriplet]] = {}
    duplicates = 0
    for order, t in enumerate(triplets):
        key = (t.head_concept_id, t.relation, t.tail_title.casefold())
        rank = (priority.get(t.site_id, len(priority)), order)
        if key in best:
            duplicates += 1
            if rank < best[key][:2]:
                best[key] = (*rank, t)
        else:
            best[key] = (*rank, t)
    deduped = [entry[2] for entry in sorted(best.values(), key=lambda e: e[1])]
    return deduped, duplicates


def render_report(report: ExtractionReport) -> tuple[str, dict]:
    """Text table plus machine-readable dict; cells as "count(rate%)"."""

    def cell_text(counts: CellCounts) -> str:
        return f"{counts.positives}({counts.positive_rate * 100:.1f}%)"

    sites = sorted({site for site, _ in report.cells} | set(report.pages))
    headers = ["Site", "Pages"] + [r.capitalize() for r in report.relations]
    rows = []
    for site in sites:
        row = [site, str(report.pages.get(site, 0))]
        for relation in report.relations:
            row.append(cell_text(report.cells.get((site, relation), CellCounts())))
        rows.append(row)

    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    text = "\n".join(lines)

    as_dict = {
        "relations": report.relations,
        "sites": {
            site: {
                "pages": report.pages.get(site, 0),
                "cells": {
                    relation: {
                        "candidates": report.cells.get((site, relation), CellCounts()).candidates,
                        "positives": report.cells.get((site, relation), CellCounts()).positives,
                        "negatives": report.cells.get((site, relation), CellCounts()).negatives,
                        "malformed": report.cells.get((site, relation), CellCounts()).malformed,
                        "positive_rate": report.cells.get((site, relation), CellCounts()).positive_rate,
                        "display": cell_text(report.cells.get((site, relation), CellCounts())),
                    }
                    for relation in report.relations
                },
            }
            for site in sites
        },
        "totals": {
            "candidates": report.totals.candidates,
            "positives": report.totals.positives,
            "negatives": report.totals.negatives,
            "malformed": report.totals.malformed,
        },
    }
    return text, as_dict


def write_triplets(triplets: Iterable[RelationTriplet], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in triplets:
            fh.write(json.dumps(t.to_dict(), ensure_ascii=False) + "\n")
