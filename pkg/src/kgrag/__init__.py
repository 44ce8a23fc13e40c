"""Knowledge-graph guided retrieval for retrieval-augmented generation."""

from .corpus import Chunk, ChunkingConfig, Corpus, Document, QaExample, load_hotpot_corpus, split_document
from .embedding import HashingEmbedder, ScoredChunk, SimilarityCache, VectorIndex, cosine
from .kg_store import AssociationKG, Subgraph, Triplet
from .pipeline import Engine, PipelineConfig, Providers, Snapshot, answer, build_providers, retrieve

__version__ = "0.1.0"

__all__ = [
    "AssociationKG",
    "Chunk",
    "ChunkingConfig",
    "Corpus",
    "Document",
    "Engine",
    "HashingEmbedder",
    "PipelineConfig",
    "Providers",
    "QaExample",
    "ScoredChunk",
    "SimilarityCache",
    "Snapshot",
    "Subgraph",
    "Triplet",
    "VectorIndex",
    "answer",
    "build_providers",
    "cosine",
    "load_hotpot_corpus",
    "retrieve",
    "split_document",
]
