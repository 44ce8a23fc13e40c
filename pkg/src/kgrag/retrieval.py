"""KG-enhanced chunk retrieval: semantic seeds, m-hop graph expansion, chunk readout."""

from __future__ import annotations

from dataclasses import dataclass, field

from .embedding import EmbeddingProvider, ScoredChunk, SimilarityCache, VectorIndex, fingerprint
from .kg_store import EMPTY_SUBGRAPH, AssociationKG, Subgraph

DEFAULT_SEED_K = 10
DEFAULT_HOPS = 1


@dataclass(frozen=True)
class SeedSet:
    query: str
    scored: tuple[ScoredChunk, ...]

    @property
    def chunk_ids(self) -> list[str]:
        return [s.chunk_id for s in self.scored]


@dataclass(frozen=True)
class ExpandedResult:
    subgraph: Subgraph
    chunks: tuple[str, ...]
    hops_used: int
    seed_subgraph: Subgraph = EMPTY_SUBGRAPH
    # Seeds that contributed no traversable triplet, in seed score order.
    unlinked_seeds: tuple[str, ...] = field(default=())


def seed_retrieve(
    query: str,
    index: VectorIndex,
    provider: EmbeddingProvider,
    seed_k: int = DEFAULT_SEED_K,
    cache: SimilarityCache | None = None,
) -> SeedSet:
    """Top ``seed_k`` chunks by cosine similarity to ``query``.

    Every similarity computed during the scan goes into ``cache`` so the
    organizer can weight edges without re-embedding.
    """
    if seed_k < 1:
        raise ValueError("seed_k must be >= 1")
    if len(index) and index.fingerprint != fingerprint(provider):
        raise ValueError(f"index built with {index.fingerprint!r}, provider is {fingerprint(provider)!r}")
    if not len(index):
        return SeedSet(query, ())
    query_vec = provider.embed([query])[0]
    order, scores = index.ranked(query_vec)
    if cache is not None:
        cache.put_many(query, {cid: float(s) for cid, s in zip(index.chunk_ids, scores)})
    top = tuple(ScoredChunk(index.chunk_ids[i], float(scores[i])) for i in order[:seed_k])
    return SeedSet(query, top)


def readout_chunks(subgraph: Subgraph, kg: AssociationKG) -> list[str]:
    """Distinct source chunks of ``subgraph``, by first appearance in triplet-id order."""
    seen: dict[str, None] = {}
    for tid in sorted(subgraph.triplet_ids):
        seen.setdefault(kg.triplet(tid).source_chunk, None)
    return list(seen)


def expand(kg: AssociationKG, seeds: SeedSet, m: int = DEFAULT_HOPS, keep_unlinked_seeds: bool = True) -> ExpandedResult:
    """Grow the seed subgraph by ``m`` breadth-first hops over entity adjacency.

    The expanded subgraph is the seed subgraph plus every non-self-loop
    triplet whose head and tail both lie in the reached entity set. With
    ``m == 0`` it is exactly the seed subgraph.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    seed_ids = seeds.chunk_ids
    seed_graph = kg.subgraph_for_chunks(seed_ids)

    reached = set(seed_graph.entities)
    frontier = set(reached)
    for _ in range(m):
        adjacent, _ = kg.entity_neighborhood(frontier)
        frontier = adjacent - reached
        if not frontier:
            break
        reached |= frontier

    if m == 0:
        subgraph = seed_graph
    else:
        subgraph = kg.subgraph(seed_graph.triplet_ids | kg.triplets_within(reached))

    unlinked = tuple(
        cid for cid in seed_ids
        if not any(not kg.triplet(t).is_self_loop for t in kg.chunk_index.get(cid, ()))
    )
    chunks = readout_chunks(subgraph, kg)
    if keep_unlinked_seeds:
        present = set(chunks)
        chunks.extend(cid for cid in unlinked if cid not in present)
    else:
        unlinked = ()
    return ExpandedResult(subgraph, tuple(chunks), m, seed_graph, unlinked)
