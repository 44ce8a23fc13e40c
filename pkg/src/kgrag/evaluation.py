"""HotpotQA-style scoring, ablation runs, and the entity-shuffle dataset transform."""

from __future__ import annotations

import json
import random
import re
import string
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Chunk, Corpus, Document, QaExample
from .embedding import SimilarityCache
from .kg_store import AssociationKG, Triplet
from .llm import ProviderError
from .pipeline import PipelineConfig, Providers, Snapshot, answer


@dataclass(frozen=True)
class Metrics:
    f1: float
    precision: float
    recall: float

    @classmethod
    def from_pr(cls, precision: float, recall: float) -> "Metrics":
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return cls(f1, precision, recall)

    def to_dict(self) -> dict:
        return {"f1": self.f1, "precision": self.precision, "recall": self.recall}


_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)


def normalize_answer(text: str) -> str:
    text = "".join(ch for ch in text.lower() if ch not in _PUNCT)
    return " ".join(_ARTICLES.sub(" ", text).split())


def answer_metrics(prediction: str, gold: str) -> Metrics:
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens or not gold_tokens:
        same = float(not pred_tokens and not gold_tokens)
        return Metrics(same, same, same)
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return Metrics(0.0, 0.0, 0.0)
    return Metrics.from_pr(overlap / len(pred_tokens), overlap / len(gold_tokens))


def retrieval_metrics(retrieved: Iterable[str], gold_support: Iterable[str]) -> Metrics:
    """Set-overlap precision/recall at chunk level.

    Empty ``retrieved`` gives precision 0; empty gold gives recall 1.
    """
    retrieved, gold = set(retrieved), set(gold_support)
    hits = len(retrieved & gold)
    precision = hits / len(retrieved) if retrieved else 0.0
    recall = hits / len(gold) if gold else 1.0
    return Metrics.from_pr(precision, recall)


# -- evaluation runs ----------------------------------------------------------


@dataclass
class ExampleResult:
    query_id: str
    status: str  # "ok" or "failed"
    answer: str = ""
    answer_metrics: Metrics | None = None
    retrieval_metrics: Metrics | None = None
    retrieved: list[str] = field(default_factory=list)
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "status": self.status,
            "answer": self.answer,
            "answer_metrics": self.answer_metrics.to_dict() if self.answer_metrics else None,
            "retrieval_metrics": self.retrieval_metrics.to_dict() if self.retrieval_metrics else None,
            "retrieved": self.retrieved,
            "error": self.error,
        }


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


@dataclass
class EvalReport:
    examples: list[ExampleResult]
    config: dict
    setting: str

    @property
    def succeeded(self) -> list[ExampleResult]:
        return [e for e in self.examples if e.status == "ok"]

    @property
    def aggregates(self) -> dict:
        ok = self.succeeded
        agg = {"examples": len(self.examples), "failed": len(self.examples) - len(ok)}
        for kind in ("answer", "retrieval"):
            for name in ("f1", "precision", "recall"):
                agg[f"{kind}_{name}"] = _mean([getattr(getattr(e, f"{kind}_metrics"), name) for e in ok])
        agg["avg_retrieved"] = _mean([len(e.retrieved) for e in ok])
        return agg

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "config": self.config,
            "aggregates": self.aggregates,
            "examples": [e.to_dict() for e in self.examples],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False)

    def render_table(self) -> str:
        agg = self.aggregates
        rows = [
            ("", "F1", "Precision", "Recall"),
            ("Response", *(f"{agg[f'answer_{n}']:.3f}" for n in ("f1", "precision", "recall"))),
            ("Retrieval", *(f"{agg[f'retrieval_{n}']:.3f}" for n in ("f1", "precision", "recall"))),
        ]
        lines = [f"{r[0]:<10} {r[1]:>9} {r[2]:>9} {r[3]:>9}" for r in rows]
        lines.append(f"avg retrieved chunks: {agg['avg_retrieved']:.2f}")
        lines.append(f"examples: {agg['examples']} (failed: {agg['failed']}), setting: {self.setting}")
        return "\n".join(lines)


def run_eval(
    examples: Sequence[QaExample],
    snapshot: Snapshot,
    cfg: PipelineConfig,
    providers: Providers,
    setting: str = "distractor",
    parallelism: int = 1,
    cache: SimilarityCache | None = None,
) -> EvalReport:
    """Run the pipeline over ``examples`` and score answers and retrieval.

    ``distractor`` restricts index and KG to each example's own documents;
    ``fullwiki`` searches everything. Provider failures mark the example
    failed and exclude it from the means.
    """
    if setting not in ("distractor", "fullwiki"):
        raise ValueError(f"unknown setting {setting!r}")
    cache = cache if cache is not None else SimilarityCache()

    def one(example: QaExample) -> ExampleResult:
        restrict = None
        if setting == "distractor":
            restrict = {c.chunk_id for d in example.doc_ids for c in snapshot.corpus.chunks_of(d)}
        try:
            result = answer(snapshot, example.question, providers, cfg, cache, restrict)
        except ProviderError as exc:
            return ExampleResult(example.query_id, "failed", error=str(exc))
        retrieved = result.retrieval.chunk_ids
        return ExampleResult(
            example.query_id,
            "ok",
            result.answer.text,
            answer_metrics(result.answer.text, example.gold_answer),
            retrieval_metrics(retrieved, example.gold_support),
            retrieved,
        )

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        results = list(pool.map(one, examples))
    return EvalReport(results, {**cfg.snapshot(), "setting": setting}, setting)


# -- entity shuffling ----------------------------------------------------------


@dataclass
class ShuffleResult:
    corpus: Corpus
    kg: AssociationKG
    examples: list[QaExample]
    mapping: dict[str, str]
    flags: list[str] = field(default_factory=list)


def load_category_map(path: str | Path) -> dict[str, str]:
    """Read JSONL lines of ``{"entity": ..., "category": ...}``."""
    mapping = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                mapping[str(rec["entity"])] = str(rec["category"])
    return mapping


def _derangement(members: list[str], rng: random.Random) -> list[str]:
    while True:
        perm = members[:]
        rng.shuffle(perm)
        if all(a != b for a, b in zip(members, perm)):
            return perm


def draw_mapping(category_map: Mapping[str, str], seed: int) -> tuple[dict[str, str], list[str]]:
    """Per category, map every member to a different member (a derangement).

    Single-member categories map to themselves and are flagged.
    """
    rng = random.Random(seed)
    by_category: dict[str, list[str]] = {}
    for entity, category in category_map.items():
        by_category.setdefault(category, []).append(entity)
    mapping: dict[str, str] = {}
    flags: list[str] = []
    for category in sorted(by_category):
        members = sorted(set(by_category[category]))
        if len(members) == 1:
            flags.append(f"category {category!r} has a single member; left unchanged")
            mapping[members[0]] = members[0]
            continue
        mapping.update(zip(members, _derangement(members, rng)))
    return mapping, flags


def make_substituter(mapping: Mapping[str, str]):
    """Simultaneous whole-word replacement of every mapped surface form."""
    moving = {k: v for k, v in mapping.items() if k != v}
    if not moving:
        return lambda text: text
    alternatives = "|".join(re.escape(k) for k in sorted(moving, key=lambda k: (-len(k), k)))
    pattern = re.compile(rf"(?<!\w)(?:{alternatives})(?!\w)")
    return lambda text: pattern.sub(lambda m: moving[m.group(0)], text)


def shuffle_entities(
    corpus: Corpus,
    kg: AssociationKG,
    qa: Sequence[QaExample],
    category_map: Mapping[str, str],
    seed: int,
) -> ShuffleResult:
    """Swap entities within categories consistently across documents, chunks,
    questions, answers and triplets. Ids and counts are unchanged."""
    mapping, flags = draw_mapping(category_map, seed)
    sub = make_substituter(mapping)

    documents = [
        Document(
            d.doc_id,
            sub(d.title),
            sub(d.text),
            tuple(sub(s) for s in d.sentences) if d.sentences is not None else None,
        )
        for d in corpus.documents
    ]
    chunks = [Chunk(c.chunk_id, c.doc_id, c.seq, sub(c.text)) for c in corpus.chunks]
    new_corpus = Corpus(documents, chunks)

    new_kg = AssociationKG(kg.created_at)
    for chunk_id, doc_id in sorted(kg.registered_chunks.items()):
        new_kg.register_chunk(chunk_id, doc_id)
    new_kg.insert_triplets(Triplet(sub(t.head), sub(t.relation), sub(t.tail), t.source_chunk) for _, t in kg.items())

    examples = [replace(ex, question=sub(ex.question), gold_answer=sub(ex.gold_answer)) for ex in qa]
    return ShuffleResult(new_corpus, new_kg, examples, mapping, flags)
