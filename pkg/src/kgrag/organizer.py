"""KG-based context organization.

The expanded subgraph becomes an undirected multigraph weighted by each
edge's source-chunk similarity to the query. Every connected component is
reduced to its maximum spanning tree, trees are reranked by their triplet
text, and chunks are emitted tree by tree in DFS order under a chunk budget.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import httpx

from .embedding import EmbeddingProvider, SimilarityCache, cosine
from .kg_store import AssociationKG, Subgraph
from .llm import ProviderError, call_with_retries

logger = logging.getLogger(__name__)

DEFAULT_BUDGET_K = 10


@dataclass(frozen=True)
class Edge:
    a: str  # endpoint keys, a <= b
    b: str
    relation: str
    source_chunk: str
    weight: float
    head: str  # original direction and surface forms
    tail: str
    triplet_id: int

    def other(self, node: str) -> str:
        return self.b if node == self.a else self.a

    def render(self) -> str:
        return f"<{self.head}, {self.relation}, {self.tail}>"


def edge_order(edge: Edge) -> tuple:
    """Sort key: weight descending, then source chunk, then endpoints and relation."""
    return (-edge.weight, edge.source_chunk, edge.a, edge.b, edge.relation, edge.triplet_id)


@dataclass
class WeightedContextGraph:
    nodes: set[str] = field(default_factory=set)
    edges: list[Edge] = field(default_factory=list)


@dataclass(frozen=True)
class Component:
    nodes: frozenset[str]
    edges: tuple[Edge, ...]

    @property
    def key(self) -> str:
        return min(self.nodes)


@dataclass
class SpanningTree:
    nodes: frozenset[str]
    edges: tuple[Edge, ...]
    root_edge: Edge | None
    score: float = 0.0
    fallback: bool = False

    @property
    def key(self) -> str:
        return min(self.nodes) if self.nodes else ""

    @property
    def weight(self) -> float:
        return sum(e.weight for e in self.edges)


@dataclass(frozen=True)
class BundleEntry:
    chunk_id: str
    tree_rank: int | None  # None for chunks filled from unlinked seeds
    tree_score: float
    source: str  # "tree" or "seed"


@dataclass
class ContextBundle:
    entries: list[BundleEntry] = field(default_factory=list)
    trees: list[SpanningTree] = field(default_factory=list)
    reranker_fallback: bool = False

    @property
    def chunk_ids(self) -> list[str]:
        return [e.chunk_id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict:
        return {
            "chunks": [
                {"chunk_id": e.chunk_id, "tree_rank": e.tree_rank, "tree_score": e.tree_score, "source": e.source}
                for e in self.entries
            ],
            "trees": [
                {
                    "rank": rank,
                    "score": t.score,
                    "fallback": t.fallback,
                    "entities": sorted(t.nodes),
                    "edges": [
                        {"head": e.head, "relation": e.relation, "tail": e.tail, "chunk_id": e.source_chunk, "weight": e.weight}
                        for e in dfs_edges(t)
                    ],
                }
                for rank, t in enumerate(self.trees)
            ],
            "reranker_fallback": self.reranker_fallback,
        }


# -- graph construction -------------------------------------------------------


def build_weighted_graph(
    subgraph: Subgraph,
    kg: AssociationKG,
    sims: SimilarityCache,
    query: str,
    compute: Callable[[str], float] | None = None,
) -> WeightedContextGraph:
    """One undirected edge per non-self-loop triplet, weighted by ``s(query, chunk)``.

    Weights come from ``sims``; on a miss ``compute(chunk_id)`` supplies it.
    """
    graph = WeightedContextGraph()
    for tid in sorted(subgraph.triplet_ids):
        t = kg.triplet(tid)
        if t.is_self_loop:
            continue
        h, tl = t.head_key, t.tail_key
        cached = sims.get(query, t.source_chunk)
        if cached is None:
            if compute is None:
                raise KeyError(f"no similarity for chunk {t.source_chunk!r} and no fallback")
            cached = compute(t.source_chunk)
            sims.put_many(query, {t.source_chunk: cached})
        a, b = (h, tl) if h <= tl else (tl, h)
        graph.nodes.update((a, b))
        graph.edges.append(Edge(a, b, t.relation, t.source_chunk, float(cached), t.head, t.tail, tid))
    return graph


class DisjointSet:
    def __init__(self, items: Iterable[str] = ()) -> None:
        self.parent = {x: x for x in items}
        self.rank = {x: 0 for x in self.parent}

    def find(self, x: str) -> str:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: str, y: str) -> bool:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        if self.rank[rx] < self.rank[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        if self.rank[rx] == self.rank[ry]:
            self.rank[rx] += 1
        return True


def connected_components(graph: WeightedContextGraph) -> list[Component]:
    """Maximal connected components, ordered by their smallest entity key."""
    adjacency: dict[str, list[Edge]] = {n: [] for n in graph.nodes}
    for e in graph.edges:
        adjacency[e.a].append(e)
        adjacency[e.b].append(e)
    label: dict[str, int] = {}
    members: list[list[str]] = []
    for start in sorted(graph.nodes):
        if start in label:
            continue
        label[start] = len(members)
        nodes = [start]
        stack = [start]
        while stack:
            node = stack.pop()
            for e in adjacency[node]:
                nxt = e.other(node)
                if nxt not in label:
                    label[nxt] = label[start]
                    nodes.append(nxt)
                    stack.append(nxt)
        members.append(nodes)
    edges: list[list[Edge]] = [[] for _ in members]
    for e in graph.edges:
        edges[label[e.a]].append(e)
    return [Component(frozenset(n), tuple(es)) for n, es in zip(members, edges)]


def max_spanning_tree(comp: Component) -> SpanningTree:
    """Kruskal on edges in descending weight, with deterministic tie order.

    The root edge is the first accepted edge, i.e. the heaviest tree edge.
    """
    dsu = DisjointSet(comp.nodes)
    chosen = []
    for e in sorted(comp.edges, key=edge_order):
        if dsu.union(e.a, e.b):
            chosen.append(e)
            if len(chosen) == len(comp.nodes) - 1:
                break
    return SpanningTree(comp.nodes, tuple(chosen), chosen[0] if chosen else None)


# -- representations ----------------------------------------------------------


def dfs_edges(tree: SpanningTree) -> list[Edge]:
    """Tree edges in DFS order, starting at the root edge.

    From the root edge the walk first descends from whichever endpoint has the
    heavier remaining edge, then the other endpoint. At each node, unvisited
    edges are taken in :func:`edge_order`.
    """
    if tree.root_edge is None:
        return []
    adjacency: dict[str, list[Edge]] = {n: [] for n in tree.nodes}
    for e in tree.edges:
        adjacency[e.a].append(e)
        adjacency[e.b].append(e)
    for edges in adjacency.values():
        edges.sort(key=edge_order)

    root = tree.root_edge
    order = [root]
    used = {id(root)}

    def best(node: str) -> tuple:
        rest = [e for e in adjacency[node] if id(e) not in used]
        return edge_order(rest[0]) if rest else (float("inf"),)

    first, second = sorted((root.a, root.b), key=lambda n: (best(n), n))
    for start in (first, second):
        stack = [(start, iter(adjacency[start]))]
        while stack:
            node, edges = stack[-1]
            for e in edges:
                if id(e) in used:
                    continue
                used.add(id(e))
                order.append(e)
                nxt = e.other(node)
                stack.append((nxt, iter(adjacency[nxt])))
                break
            else:
                stack.pop()
    return order


def text_representation(tree: SpanningTree) -> list[str]:
    """Source chunks of the tree's edges in DFS order, each kept once."""
    seen: dict[str, None] = {}
    for e in dfs_edges(tree):
        seen.setdefault(e.source_chunk, None)
    return list(seen)


def triplet_representation(tree: SpanningTree) -> str:
    return "\n".join(e.render() for e in dfs_edges(tree))


# -- reranking ----------------------------------------------------------------


class Reranker(Protocol):
    def score(self, query: str, documents: Sequence[str]) -> list[float]: ...


class EmbeddingReranker:
    """Cosine between query and document embeddings; stands in for a cross-encoder."""

    def __init__(self, provider: EmbeddingProvider) -> None:
        self.provider = provider

    def score(self, query: str, documents: Sequence[str]) -> list[float]:
        if not documents:
            return []
        vectors = self.provider.embed([query, *documents])
        return [cosine(vectors[0], v) for v in vectors[1:]]


class HttpReranker:
    """Cross-encoder service client: ``POST {query, documents}`` -> ``{scores}``."""

    def __init__(
        self,
        url: str,
        *,
        retries: int = 2,
        timeout_s: float = 30.0,
        api_key: str | None = None,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.url = url
        self.retries = retries
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout_s, headers=headers, transport=transport)

    def _post(self, query: str, documents: list[str]) -> list[float]:
        try:
            resp = self._client.post(self.url, json={"query": query, "documents": documents})
        except httpx.HTTPError as exc:
            raise ProviderError(f"reranker transport error: {exc}") from exc
        if resp.status_code >= 500 or resp.status_code == 429:
            raise ProviderError(f"reranker returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderError(f"reranker rejected request: HTTP {resp.status_code}", retryable=False)
        try:
            scores = [float(s) for s in resp.json()["scores"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderError(f"malformed reranker payload: {exc}", retryable=False) from exc
        if len(scores) != len(documents):
            raise ProviderError("reranker returned wrong number of scores", retryable=False)
        return scores

    def score(self, query: str, documents: Sequence[str]) -> list[float]:
        if not documents:
            return []
        scores, _ = call_with_retries(lambda: self._post(query, list(documents)), self.retries)
        return scores


def rerank_trees(query: str, trees: Sequence[SpanningTree], reranker: Reranker | None) -> list[SpanningTree]:
    """Score each tree on its triplet representation and sort descending.

    Ties go to the tree with the smaller smallest-entity key. If the reranker
    fails, each tree is scored by its heaviest edge and flagged ``fallback``.
    """
    trees = list(trees)
    if not trees:
        return []
    docs = [triplet_representation(t) for t in trees]
    try:
        if reranker is None:
            raise ProviderError("no reranker configured", retryable=False)
        scores = [float(s) for s in reranker.score(query, docs)]
        fallback = False
    except (ProviderError, ValueError) as exc:
        logger.warning("reranker unavailable (%s); scoring trees by max edge weight", exc)
        scores = [max((e.weight for e in t.edges), default=0.0) for t in trees]
        fallback = True
    for tree, score in zip(trees, scores):
        tree.score = score
        tree.fallback = fallback
    return sorted(trees, key=lambda t: (-t.score, t.key))


# -- selection ----------------------------------------------------------------


def select_context(
    sorted_trees: Sequence[SpanningTree],
    budget_k: int = DEFAULT_BUDGET_K,
    unlinked_seeds: Sequence[tuple[str, float]] | Sequence[str] = (),
) -> ContextBundle:
    """Fill up to ``budget_k`` distinct chunks, tree by tree in rank order.

    A tree that straddles the budget contributes a DFS-order prefix. Leftover
    budget is filled from ``unlinked_seeds`` (ids, or ``(id, score)`` pairs,
    already in score order).
    """
    if budget_k < 1:
        raise ValueError("budget_k must be >= 1")
    bundle = ContextBundle(trees=list(sorted_trees), reranker_fallback=any(t.fallback for t in sorted_trees))
    taken: set[str] = set()
    for rank, tree in enumerate(sorted_trees):
        for chunk_id in text_representation(tree):
            if len(bundle.entries) >= budget_k:
                return bundle
            if chunk_id in taken:
                continue
            taken.add(chunk_id)
            bundle.entries.append(BundleEntry(chunk_id, rank, tree.score, "tree"))
    for seed in unlinked_seeds:
        chunk_id, score = (seed, 0.0) if isinstance(seed, str) else seed
        if len(bundle.entries) >= budget_k:
            break
        if chunk_id in taken:
            continue
        taken.add(chunk_id)
        bundle.entries.append(BundleEntry(chunk_id, None, float(score), "seed"))
    return bundle


def organize(
    query: str,
    subgraph: Subgraph,
    kg: AssociationKG,
    sims: SimilarityCache,
    reranker: Reranker | None,
    budget_k: int = DEFAULT_BUDGET_K,
    unlinked_seeds: Sequence[tuple[str, float]] = (),
    compute: Callable[[str], float] | None = None,
) -> ContextBundle:
    graph = build_weighted_graph(subgraph, kg, sims, query, compute)
    trees = [max_spanning_tree(c) for c in connected_components(graph)]
    return select_context(rerank_trees(query, trees, reranker), budget_k, unlinked_seeds)
