"""End-to-end retrieval pipeline over an immutable snapshot of corpus, KG and index."""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import yaml

from .corpus import Chunk, ChunkingConfig, Corpus, Document, read_chunks
from .embedding import EmbeddingProvider, HashingEmbedder, HttpEmbedder, SimilarityCache, VectorIndex, cosine, fingerprint
from .generation import AnswerPrompt, GeneratedAnswer, assemble_prompt, generate_answer
from .kg_builder import ExtractionProgress, extract_corpus
from .kg_store import AssociationKG, Triplet
from .llm import LLMProvider, MockLLM, OpenAIChatLLM
from .organizer import BundleEntry, ContextBundle, EmbeddingReranker, HttpReranker, Reranker, organize
from .retrieval import ExpandedResult, SeedSet, expand, seed_retrieve

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    seed_k: int = 10
    budget_k: int = 10
    m: int = 1
    keep_unlinked_seeds: bool = True
    expansion: bool = True
    organization: bool = True
    retries: int = 2
    parallelism: int = 1
    max_context_chars: int = 32_000
    embedding: dict = field(default_factory=lambda: {"kind": "hashing", "dimension": 64})
    reranker: dict = field(default_factory=lambda: {"kind": "embedding"})
    llm: dict = field(default_factory=lambda: {"kind": "mock"})
    workspace: str = "kgrag_workspace"

    def __post_init__(self) -> None:
        if self.budget_k < 1:
            raise ValueError("budget_k must be >= 1")
        if self.seed_k < 1:
            raise ValueError("seed_k must be >= 1")
        if self.m < 0:
            raise ValueError("m must be >= 0")

    def with_overrides(self, **changes: Any) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def snapshot(self) -> dict:
        """Retrieval-relevant settings, for reports. Secrets are excluded."""
        return {
            "seed_k": self.seed_k,
            "budget_k": self.budget_k,
            "m": self.m,
            "keep_unlinked_seeds": self.keep_unlinked_seeds,
            "expansion": self.expansion,
            "organization": self.organization,
            "max_units": self.chunking.max_units,
        }


_SECRET_ENV = {
    "llm": "KGRAG_LLM_API_KEY",
    "embedding": "KGRAG_EMBEDDING_API_KEY",
    "reranker": "KGRAG_RERANKER_API_KEY",
}


def load_config(path: str | Path | None = None, env: dict[str, str] | None = None) -> PipelineConfig:
    """Read a YAML config; API keys come from ``KGRAG_*_API_KEY`` env vars."""
    env = dict(os.environ) if env is None else env
    data: dict = {}
    if path is not None:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    chunking = ChunkingConfig(**data.pop("chunking", {}))
    defaults = PipelineConfig()
    for section, var in _SECRET_ENV.items():
        if var in env:
            data[section] = {**data.get(section, getattr(defaults, section)), "api_key": env[var]}
    if "KGRAG_WORKSPACE" in env:
        data["workspace"] = env["KGRAG_WORKSPACE"]
    return PipelineConfig(chunking=chunking, **data)


@dataclass
class Providers:
    embedder: EmbeddingProvider
    reranker: Reranker | None
    llm: LLMProvider


def build_providers(cfg: PipelineConfig) -> Providers:
    emb = cfg.embedding
    if emb.get("kind", "hashing") == "hashing":
        embedder: EmbeddingProvider = HashingEmbedder(int(emb.get("dimension", 64)))
    elif emb["kind"] == "http":
        embedder = HttpEmbedder(emb["url"], emb["model"], int(emb["dimension"]), retries=cfg.retries, api_key=emb.get("api_key"))
    else:
        raise ValueError(f"unknown embedding provider {emb['kind']!r}")

    rr = cfg.reranker
    kind = rr.get("kind", "embedding")
    reranker: Reranker | None
    if kind == "embedding":
        reranker = EmbeddingReranker(embedder)
    elif kind == "http":
        reranker = HttpReranker(rr["url"], retries=cfg.retries, api_key=rr.get("api_key"))
    elif kind == "none":
        reranker = None
    else:
        raise ValueError(f"unknown reranker {kind!r}")

    llm_cfg = cfg.llm
    kind = llm_cfg.get("kind", "mock")
    if kind == "mock":
        fixtures = llm_cfg.get("fixtures")
        default = llm_cfg.get("default", "")
        llm: LLMProvider = MockLLM.from_file(fixtures, default) if fixtures else MockLLM(default=default)
    elif kind == "openai":
        llm = OpenAIChatLLM(llm_cfg["base_url"], llm_cfg["model"], llm_cfg.get("api_key"), float(llm_cfg.get("timeout_s", 60)))
    else:
        raise ValueError(f"unknown llm provider {kind!r}")
    return Providers(embedder, reranker, llm)


@dataclass(frozen=True)
class Snapshot:
    corpus: Corpus
    kg: AssociationKG
    index: VectorIndex

    @classmethod
    def build(cls, corpus: Corpus, kg: AssociationKG, provider: EmbeddingProvider) -> "Snapshot":
        kg.register_chunks(corpus)
        return cls(corpus, kg, VectorIndex.build(provider, corpus))


@dataclass
class RetrievalResult:
    question: str
    seeds: SeedSet
    expanded: ExpandedResult | None
    bundle: ContextBundle
    kg: AssociationKG

    @property
    def chunk_ids(self) -> list[str]:
        return self.bundle.chunk_ids

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "question": self.question,
            "seeds": [{"chunk_id": s.chunk_id, "score": s.score} for s in self.seeds.scored],
        }
        if self.expanded is not None:
            exp = self.expanded
            out["expanded"] = {
                "hops": exp.hops_used,
                "entities": sorted(exp.subgraph.entities),
                "triplets": [
                    {"id": tid, "head": t.head, "relation": t.relation, "tail": t.tail, "chunk_id": t.source_chunk}
                    for tid, t in ((tid, self.kg.triplet(tid)) for tid in sorted(exp.subgraph.triplet_ids))
                ],
                "chunks": list(exp.chunks),
                "unlinked_seeds": list(exp.unlinked_seeds),
            }
        out["bundle"] = self.bundle.to_dict()
        return out


@dataclass
class QueryResult:
    retrieval: RetrievalResult
    prompt: AnswerPrompt
    answer: GeneratedAnswer

    def to_dict(self) -> dict:
        out = self.retrieval.to_dict()
        out["answer"] = {"text": self.answer.text, "model": self.answer.model, "attempts": self.answer.attempts, "flags": self.answer.flags}
        out["prompt_truncated"] = self.prompt.truncated
        return out


def _similarity_order(chunk_ids: Iterable[str], scores: dict[str, float]) -> list[str]:
    return sorted(set(chunk_ids), key=lambda c: (-scores[c], c))


def retrieve(
    snapshot: Snapshot,
    question: str,
    providers: Providers,
    cfg: PipelineConfig,
    cache: SimilarityCache | None = None,
    restrict_to: Iterable[str] | None = None,
) -> RetrievalResult:
    """Seed retrieval, optional expansion, and optional organization.

    ``restrict_to`` limits index and KG to the given chunk ids (the
    distractor setting). With expansion off the hop count is 0, so the
    organizer works on the seed subgraph alone. With organization off, the
    candidate chunks are returned in similarity order without a budget.
    """
    cache = cache if cache is not None else SimilarityCache()
    index, kg = snapshot.index, snapshot.kg
    if restrict_to is not None:
        allowed = set(restrict_to)
        index, kg = index.subset(allowed), kg.restricted(allowed)

    seeds = seed_retrieve(question, index, providers.embedder, cfg.seed_k, cache)
    query_vec: list = []

    def compute(chunk_id: str) -> float:
        if not query_vec:
            query_vec.append(providers.embedder.embed([question])[0])
        vec = index.vector(chunk_id) if chunk_id in index else providers.embedder.embed([snapshot.corpus.text(chunk_id)])[0]
        return cosine(query_vec[0], vec)

    hops = cfg.m if cfg.expansion else 0
    expanded = expand(kg, seeds, hops, cfg.keep_unlinked_seeds)
    seed_scores = {s.chunk_id: s.score for s in seeds.scored}

    if cfg.organization:
        unlinked = [(c, seed_scores[c]) for c in expanded.unlinked_seeds]
        bundle = organize(question, expanded.subgraph, kg, cache, providers.reranker, cfg.budget_k, unlinked, compute)
    else:
        pool = seeds.chunk_ids if not cfg.expansion else expanded.chunks
        scores = {c: cache.lookup(question, c, lambda c=c: compute(c)) for c in pool}
        bundle = ContextBundle([BundleEntry(c, None, scores[c], "similarity") for c in _similarity_order(pool, scores)])
    return RetrievalResult(question, seeds, expanded, bundle, kg)


def answer(
    snapshot: Snapshot,
    question: str,
    providers: Providers,
    cfg: PipelineConfig,
    cache: SimilarityCache | None = None,
    restrict_to: Iterable[str] | None = None,
) -> QueryResult:
    result = retrieve(snapshot, question, providers, cfg, cache, restrict_to)
    prompt = assemble_prompt(result.bundle, snapshot.corpus, question, cfg.max_context_chars)
    return QueryResult(result, prompt, generate_answer(providers.llm, prompt, cfg.retries))


# -- mutable engine with snapshot swapping -----------------------------------


@dataclass
class IngestReport:
    new_documents: int = 0
    new_chunks: int = 0
    unchanged_documents: int = 0
    replaced_documents: int = 0
    triplets_added: int = 0
    triplets_unmatched: int = 0
    failed_chunks: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


class Engine:
    """Holds the current snapshot and applies writes by swapping in a new one.

    Writers serialize on a lock and build a fresh snapshot; readers grab
    ``engine.snapshot`` once and keep using it, so in-flight queries never
    see a half-applied update.
    """

    def __init__(self, cfg: PipelineConfig, providers: Providers, snapshot: Snapshot | None = None) -> None:
        self.cfg = cfg
        self.providers = providers
        self.cache = SimilarityCache()
        self._write_lock = threading.Lock()
        self.snapshot = snapshot or Snapshot(Corpus(), AssociationKG(), VectorIndex.build(providers.embedder, []))

    # -- reads ----------------------------------------------------------

    def retrieve(self, question: str, **overrides: Any) -> RetrievalResult:
        return retrieve(self.snapshot, question, self.providers, self.cfg.with_overrides(**overrides), self.cache)

    def query(self, question: str, **overrides: Any) -> QueryResult:
        return answer(self.snapshot, question, self.providers, self.cfg.with_overrides(**overrides), self.cache)

    def health(self) -> dict:
        snap = self.snapshot
        return {"status": "ok", "corpus_size": len(snap.corpus), "documents": len(snap.corpus.documents), "kg_triplets": len(snap.kg)}

    # -- writes ---------------------------------------------------------

    def ingest(
        self,
        documents: Sequence[Document],
        triplets: Iterable[Triplet] = (),
        extract: bool = False,
        progress: ExtractionProgress | None = None,
    ) -> IngestReport:
        """Add or replace documents. Unchanged documents are skipped.

        ``triplets`` are pre-extracted triplets; only those citing chunks of
        newly ingested documents are inserted. Triplets citing no chunk of
        the resulting corpus are counted in ``triplets_unmatched``. With
        ``extract`` the LLM extracts triplets for the new chunks.
        """
        report = IngestReport()
        triplets = list(triplets)
        with self._write_lock:
            snap = self.snapshot
            corpus, kg = snap.corpus, snap.kg.copy()
            changed: list[Document] = []
            for doc in documents:
                old = corpus.document(doc.doc_id)
                if old == doc:
                    report.unchanged_documents += 1
                    continue
                if old is not None:
                    kg.remove_document(doc.doc_id)
                    report.replaced_documents += 1
                else:
                    report.new_documents += 1
                corpus = corpus.with_document(doc, self.cfg.chunking)
                changed.append(doc)
            report.triplets_unmatched = sum(1 for t in triplets if t.source_chunk not in corpus)
            if not changed:
                return report
            new_chunks: list[Chunk] = [c for d in changed for c in corpus.chunks_of(d.doc_id)]
            report.new_chunks = len(new_chunks)
            kg.register_chunks(new_chunks)
            fresh = {c.chunk_id for c in new_chunks}
            before = len(kg)
            kg.insert_triplets(t for t in triplets if t.source_chunk in fresh)
            if extract:
                progress = progress if progress is not None else ExtractionProgress()
                extract_corpus(new_chunks, self.providers.llm, kg, progress=progress, retries=self.cfg.retries, parallelism=self.cfg.parallelism)
                report.failed_chunks = sorted(fresh & set(progress.failed))
            report.triplets_added = len(kg) - before
            index = snap.index.without(fresh | {c.chunk_id for d in changed for c in snap.corpus.chunks_of(d.doc_id)})
            index = index.with_chunks(self.providers.embedder, new_chunks)
            self.snapshot = Snapshot(corpus, kg, index)
        return report

    def add_triplets(self, triplets: Iterable[Triplet]) -> int:
        with self._write_lock:
            snap = self.snapshot
            kg = snap.kg.copy()
            added = kg.insert_triplets(triplets)
            self.snapshot = Snapshot(snap.corpus, kg, snap.index)
        return added

    def extract(self, progress: ExtractionProgress | None = None) -> ExtractionProgress:
        progress = progress if progress is not None else ExtractionProgress()
        with self._write_lock:
            snap = self.snapshot
            kg = extract_corpus(
                snap.corpus.chunks, self.providers.llm, snap.kg.copy(), progress=progress,
                retries=self.cfg.retries, parallelism=self.cfg.parallelism,
            )
            self.snapshot = Snapshot(snap.corpus, kg, snap.index)
        return progress

    def remove_document(self, doc_id: str) -> int | None:
        """Remove a document everywhere. Returns removed triplet count, or None if unknown."""
        with self._write_lock:
            snap = self.snapshot
            if snap.corpus.document(doc_id) is None:
                return None
            chunk_ids = {c.chunk_id for c in snap.corpus.chunks_of(doc_id)}
            kg = snap.kg.copy()
            removed = kg.remove_document(doc_id)
            self.snapshot = Snapshot(snap.corpus.without_document(doc_id), kg, snap.index.without(chunk_ids))
        return removed

    # -- persistence ----------------------------------------------------

    def save(self, workspace: str | Path | None = None) -> Path:
        root = Path(workspace or self.cfg.workspace)
        root.mkdir(parents=True, exist_ok=True)
        snap = self.snapshot
        with open(root / "documents.jsonl", "w", encoding="utf-8") as fh:
            for doc in snap.corpus.documents:
                rec = {"doc_id": doc.doc_id, "title": doc.title, "text": doc.text, "sentences": list(doc.sentences) if doc.sentences is not None else None}
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
        snap.corpus.write_chunks(root / "chunks.jsonl")
        snap.kg.save(root / "kg.jsonl")
        snap.index.save(root / "index.npz")
        manifest = {"fingerprint": snap.index.fingerprint, "max_units": self.cfg.chunking.max_units}
        (root / "manifest.json").write_text(json.dumps(manifest, sort_keys=True), encoding="utf-8")
        return root

    @classmethod
    def load(cls, cfg: PipelineConfig, providers: Providers, workspace: str | Path | None = None) -> "Engine":
        root = Path(workspace or cfg.workspace)
        if not (root / "manifest.json").exists():
            return cls(cfg, providers)
        documents = []
        with open(root / "documents.jsonl", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    sentences = tuple(rec["sentences"]) if rec.get("sentences") is not None else None
                    documents.append(Document(rec["doc_id"], rec["title"], rec["text"], sentences))
        corpus = Corpus(documents, read_chunks(root / "chunks.jsonl"))
        kg = AssociationKG.load(root / "kg.jsonl")
        kg.register_chunks(corpus)
        index = VectorIndex.load(root / "index.npz")
        if len(index) and index.fingerprint != fingerprint(providers.embedder):
            raise ValueError(f"workspace index built with {index.fingerprint!r}, configured provider is {fingerprint(providers.embedder)!r}")
        return cls(cfg, providers, Snapshot(corpus, kg, index))
