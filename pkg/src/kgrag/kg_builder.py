"""Triplet extraction: prompt construction, output parsing, corpus-wide extraction and stats."""

from __future__ import annotations

import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from string import Template
from typing import Iterable, Sequence

from .corpus import Chunk
from .kg_store import AssociationKG, KGError, Triplet, entity_key, normalize_text
from .llm import LLMProvider, ProviderError, call_with_retries

logger = logging.getLogger(__name__)

EXTRACTION_PROMPT_VERSION = "v1"
PASSAGE_MARKER = "Passage (JSON string):"

__all__ = [
    "Triplet",
    "normalize_text",
    "entity_key",
    "ExtractionStats",
    "ExtractionProgress",
    "build_extraction_prompt",
    "parse_extraction_output",
    "extract_corpus",
    "triplet_stats",
    "load_triplet_file",
]


def _template(version: str = EXTRACTION_PROMPT_VERSION) -> Template:
    text = resources.files("kgrag").joinpath(f"templates/extraction_prompt.{version}.txt").read_text(encoding="utf-8")
    return Template(text)


def build_extraction_prompt(chunk: Chunk) -> str:
    # The passage goes in as a JSON string literal so quotes and newlines in
    # the chunk cannot break the prompt layout.
    if not chunk.text.strip():
        raise ValueError(f"chunk {chunk.chunk_id!r} has no text")
    return _template().substitute(passage=json.dumps(chunk.text, ensure_ascii=False))


def _as_field(value: object) -> str | None:
    if isinstance(value, bool) or not isinstance(value, (str, int, float)):
        return None
    text = normalize_text(str(value))
    return text or None


def parse_extraction_output(raw: str, chunk_id: str) -> tuple[list[Triplet], int]:
    """Parse JSON-lines model output into triplets bound to ``chunk_id``.

    Returns ``(triplets, skipped)`` where ``skipped`` counts non-blank lines
    that did not yield a triplet. Code-fence lines are ignored.
    """
    triplets: list[Triplet] = []
    skipped = 0
    for line in raw.splitlines():
        line = line.strip()
        if not line or line.startswith("```"):
            continue
        try:
            parsed = json.loads(line.rstrip(","))
        except json.JSONDecodeError:
            skipped += 1
            continue
        objects = parsed if isinstance(parsed, list) else [parsed]
        line_ok = False
        for obj in objects:
            if not isinstance(obj, dict):
                continue
            head, relation, tail = (_as_field(obj.get(k)) for k in ("head", "relation", "tail"))
            if head and relation and tail:
                triplets.append(Triplet(head, relation, tail, chunk_id))
                line_ok = True
        if not line_ok:
            skipped += 1
    return triplets, skipped


@dataclass
class ExtractionProgress:
    """Resumable extraction state: finished chunks, failures, parse skips."""

    done: set[str] = field(default_factory=set)
    failed: dict[str, str] = field(default_factory=dict)
    skipped_lines: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {"done": sorted(self.done), "failed": dict(sorted(self.failed.items())), "skipped_lines": self.skipped_lines},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ExtractionProgress":
        data = json.loads(text)
        return cls(set(data.get("done", [])), dict(data.get("failed", {})), int(data.get("skipped_lines", 0)))


def extract_corpus(
    chunks: Sequence[Chunk],
    llm: LLMProvider,
    kg: AssociationKG | None = None,
    *,
    progress: ExtractionProgress | None = None,
    retries: int = 2,
    parallelism: int = 1,
    max_output_units: int | None = 512,
) -> AssociationKG:
    """Extract triplets for every chunk and insert them into ``kg``.

    Chunks already listed in ``progress.done`` (or, without a progress
    object, chunks that already have triplets in ``kg``) are skipped. Model
    calls fan out over ``parallelism`` threads; insertion happens on the
    calling thread in chunk order, so the result does not depend on
    scheduling. A chunk that still fails after ``retries`` extra attempts is
    recorded in ``progress.failed``.
    """
    kg = kg if kg is not None else AssociationKG()
    progress = progress if progress is not None else ExtractionProgress()
    kg.register_chunks(chunks)
    todo = [c for c in chunks if c.chunk_id not in progress.done and c.chunk_id not in kg.chunk_index]

    def work(chunk: Chunk) -> tuple[Chunk, list[Triplet] | None, int, str | None]:
        prompt = build_extraction_prompt(chunk)
        try:
            completion, _ = call_with_retries(lambda: llm.complete(prompt, max_output_units), retries)
        except ProviderError as exc:
            return chunk, None, 0, f"{exc} (after {exc.attempts} attempt(s))"
        triplets, skipped = parse_extraction_output(completion.text, chunk.chunk_id)
        return chunk, triplets, skipped, None

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        for chunk, triplets, skipped, error in pool.map(work, todo):
            if triplets is None:
                logger.warning("extraction failed for %s: %s", chunk.chunk_id, error)
                progress.failed[chunk.chunk_id] = error or "failed"
                continue
            kg.insert_triplets(triplets)
            progress.skipped_lines += skipped
            progress.done.add(chunk.chunk_id)
            progress.failed.pop(chunk.chunk_id, None)
    return kg


@dataclass
class ExtractionStats:
    triplets_per_chunk: dict[int, int]
    triplets_per_document: dict[int, int]
    entity_count: int = 0
    relation_count: int = 0
    triplet_count: int = 0

    def to_dict(self) -> dict:
        return {
            "triplets_per_chunk": {str(k): v for k, v in self.triplets_per_chunk.items()},
            "triplets_per_document": {str(k): v for k, v in self.triplets_per_document.items()},
            "entity_count": self.entity_count,
            "relation_count": self.relation_count,
            "triplet_count": self.triplet_count,
        }


def triplet_stats(kg: AssociationKG) -> ExtractionStats:
    """Histograms of triplets per registered chunk and per document.

    Histogram keys are triplet counts, values are how many chunks (documents)
    have that count; zero-triplet chunks are included.
    """
    registered = kg.registered_chunks
    per_chunk = Counter(len(kg.chunk_index.get(c, ())) for c in registered)
    docs = set(registered.values())
    per_doc = Counter(len(kg.doc_index.get(d, ())) for d in docs)
    relations = {entity_key(t.relation) for _, t in kg.items()}
    return ExtractionStats(
        dict(sorted(per_chunk.items())),
        dict(sorted(per_doc.items())),
        entity_count=len(kg.entity_index),
        relation_count=len(relations),
        triplet_count=len(kg),
    )


def load_triplet_file(path: str | Path) -> list[Triplet]:
    """Read pre-extracted triplets: JSONL with head, relation, tail, chunk_id."""
    triplets = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                triplets.append(Triplet(rec["head"], rec["relation"], rec["tail"], rec["chunk_id"]))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise KGError(f"{path}:{lineno}: bad triplet record: {exc}") from exc
    return triplets


def write_triplet_file(path: str | Path, triplets: Iterable[Triplet]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in triplets:
            rec = {"head": t.head, "relation": t.relation, "tail": t.tail, "chunk_id": t.source_chunk}
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
