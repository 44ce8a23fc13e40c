"""Independent oracles, random generators and fixtures shared by the tests.

Nothing here reuses the library's own algorithms: spanning trees are found by
exhaustive enumeration, reachability by boolean matrix powers, and rankings by
a plain-Python cosine followed by a full sort.
"""

from __future__ import annotations

import itertools
import json
import math
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from kgrag.corpus import ChunkingConfig, Corpus, Document, QaExample, load_hotpot_corpus
from kgrag.embedding import HashingEmbedder, VectorIndex
from kgrag.kg_builder import load_triplet_file
from kgrag.kg_store import AssociationKG, Triplet
from kgrag.llm import MockLLM
from kgrag.organizer import Component, EmbeddingReranker, Edge
from kgrag.pipeline import PipelineConfig, Providers, Snapshot

DATA = Path(__file__).parent / "data"
FIXTURE_CHUNKING = ChunkingConfig(max_units=16)
CREATED_AT = "2026-01-01T00:00:00+00:00"


# -- providers and fixtures ---------------------------------------------------


def first_context_line(prompt: str) -> str:
    """Mock answerer: the first line of the context block, or "unknown"."""
    _, _, rest = prompt.partition("Context:\n")
    line = rest.split("\n", 1)[0].strip()
    return line if line and not line.startswith("Question:") else "unknown"


def mock_providers(dimension: int = 64) -> Providers:
    embedder = HashingEmbedder(dimension)
    return Providers(embedder, EmbeddingReranker(embedder), MockLLM(responder=first_context_line))


def fixture_config(**changes) -> PipelineConfig:
    return PipelineConfig(chunking=FIXTURE_CHUNKING).with_overrides(**changes)


def load_world():
    return load_hotpot_corpus(DATA / "world.json", FIXTURE_CHUNKING)


def world_snapshot(providers: Providers):
    dataset = load_world()
    kg = AssociationKG(CREATED_AT)
    kg.register_chunks(dataset.corpus)
    kg.insert_triplets(load_triplet_file(DATA / "world_triplets.jsonl"))
    return dataset, Snapshot.build(dataset.corpus, kg, providers.embedder)


def world_categories() -> dict[str, str]:
    out = {}
    for line in (DATA / "world_categories.jsonl").read_text(encoding="utf-8").splitlines():
        rec = json.loads(line)
        out[rec["entity"]] = rec["category"]
    return out


# -- multi-hop fixture for the expansion/organization ablations ----------------
#
# Per example: the query asks where the founder of an organisation was born.
# The bridge chunk names the founder; the answer chunk states the birthplace in
# words that share no token with the question, so it only arrives through the
# KG. Nine filler chunks look like the question and crowd the seed list, and
# one filler links to a hub entity with many low-similarity member chunks.


@dataclass
class AblationFixture:
    corpus: Corpus
    kg: AssociationKG
    examples: list[QaExample]
    hub_size: int


def _name(rng: random.Random) -> str:
    consonants, vowels = "bdfgklmnprstvz", "aeiou"
    return "".join(rng.choice(consonants) + rng.choice(vowels) for _ in range(3)).capitalize()


def build_ablation_fixture(n_examples: int = 4, fillers: int = 9, hub_size: int = 22, seed: int = 7) -> AblationFixture:
    rng = random.Random(seed)
    used: set[str] = set()

    def fresh() -> str:
        while True:
            name = _name(rng)
            if name not in used:
                used.add(name)
                return name

    docs: list[Document] = []
    triplets: list[tuple[str, str, str, str]] = []
    examples: list[QaExample] = []

    def doc(doc_id: str, text: str, *facts: tuple[str, str, str]) -> None:
        docs.append(Document(doc_id, doc_id, text))
        triplets.extend((h, r, t, f"{doc_id}#0") for h, r, t in facts)

    for i in range(n_examples):
        org, person, town, hub = fresh() + " Labs", fresh() + " " + fresh(), fresh(), fresh() + " Guild"
        ids = []
        doc(f"e{i}-bridge", f"{org} was founded by {person}.", (org, "founded by", person))
        doc(f"e{i}-answer", f"{person} arrived into this world at {town}.", (person, "born in", town))
        ids += [f"e{i}-bridge", f"e{i}-answer"]
        for j in range(fillers):
            f_org, f_town = fresh() + " Works", fresh()
            facts = [(f_org, "headquartered near", f_town)]
            if j == 0:
                facts.append((f_org, "member of", hub))
            doc(f"e{i}-filler{j}", f"The founder of {f_org} was born in {f_town}.", *facts)
            ids.append(f"e{i}-filler{j}")
        for h in range(hub_size):
            member = fresh()
            doc(f"e{i}-hub{h}", f"{hub} admitted {member} during winter.", (hub, "admitted", member))
            ids.append(f"e{i}-hub{h}")
        examples.append(QaExample(
            f"e{i}",
            f"Where was the founder of {org} born?",
            town,
            frozenset({f"e{i}-bridge#0", f"e{i}-answer#0"}),
            tuple(ids),
        ))

    corpus = Corpus.from_documents(docs, ChunkingConfig(max_units=100))
    kg = AssociationKG(CREATED_AT)
    kg.register_chunks(corpus)
    kg.insert_triplets(Triplet(*t) for t in triplets)
    return AblationFixture(corpus, kg, examples, hub_size)


# -- spanning tree oracle ------------------------------------------------------


def random_multigraph(rng: random.Random, max_nodes: int = 8, max_edges: int = 14, max_weight: int = 20) -> Component:
    """A connected multigraph with integer weights; parallel edges allowed."""
    n = rng.randint(2, max_nodes)
    nodes = [f"n{i}" for i in range(n)]
    pairs = [(nodes[i], nodes[rng.randrange(i)]) for i in range(1, n)]
    for _ in range(rng.randint(0, max_edges - len(pairs))):
        x, y = rng.sample(nodes, 2)
        pairs.append((x, y))
    rng.shuffle(pairs)
    edges = []
    for idx, (x, y) in enumerate(pairs):
        a, b = sorted((x, y))
        edges.append(Edge(a, b, f"r{idx}", f"c{idx:02d}", float(rng.randint(1, max_weight)), x, y, idx))
    return Component(frozenset(nodes), tuple(edges))


def _is_spanning_tree(nodes: list[str], edges) -> bool:
    label = {n: i for i, n in enumerate(nodes)}
    for e in edges:
        la, lb = label[e.a], label[e.b]
        if la == lb:
            return False
        for n in nodes:
            if label[n] == lb:
                label[n] = la
    return len(set(label.values())) == 1


def brute_force_max_tree_weight(comp: Component) -> float:
    nodes = sorted(comp.nodes)
    best = -math.inf
    for combo in itertools.combinations(comp.edges, len(nodes) - 1):
        if _is_spanning_tree(nodes, combo):
            best = max(best, sum(e.weight for e in combo))
    return best


def tree_shape_ok(comp: Component, tree_edges) -> bool:
    nodes = sorted(comp.nodes)
    if len(tree_edges) != len(nodes) - 1 or not set(tree_edges) <= set(comp.edges):
        return False
    if len({(e.a, e.b) for e in tree_edges}) != len(tree_edges):
        return False
    return _is_spanning_tree(nodes, tree_edges)


# -- reachability oracle -------------------------------------------------------


def random_kg(rng: random.Random, max_entities: int = 30, max_triplets: int = 60, chunks: int = 12) -> AssociationKG:
    n_ent = rng.randint(1, max_entities)
    entities = [f"e{i}" for i in range(n_ent)]
    kg = AssociationKG(CREATED_AT)
    for c in range(chunks):
        kg.register_chunk(f"d{c % 4}#{c}", f"d{c % 4}")
    chunk_ids = sorted(kg.registered_chunks)
    batch = []
    for _ in range(rng.randint(0, max_triplets)):
        h = rng.choice(entities)
        t = h if rng.random() < 0.1 else rng.choice(entities)
        batch.append(Triplet(h, rng.choice(["r", "s"]), t, rng.choice(chunk_ids)))
    kg.insert_triplets(batch)
    return kg


def reachable_entities(kg: AssociationKG, seed_chunks: list[str], m: int) -> set[str]:
    """Entities within ``m`` hops of the seed triplets' entities, via (I + A)^m."""
    names = sorted({t.head_key for _, t in kg.items()} | {t.tail_key for _, t in kg.items()})
    if not names:
        return set()
    pos = {n: i for i, n in enumerate(names)}
    step = np.eye(len(names), dtype=bool)
    for _, t in kg.items():
        if t.head_key != t.tail_key:
            step[pos[t.head_key], pos[t.tail_key]] = step[pos[t.tail_key], pos[t.head_key]] = True
    start = np.zeros(len(names), dtype=bool)
    for _, t in kg.items():
        if t.source_chunk in seed_chunks:
            start[pos[t.head_key]] = start[pos[t.tail_key]] = True
    reach = start
    for _ in range(m):
        reach = (step.astype(np.int64) @ reach.astype(np.int64)) > 0
    return {names[i] for i in np.flatnonzero(reach)}


def expected_triplets(kg: AssociationKG, seed_chunks: list[str], reached: set[str], m: int) -> set[int]:
    seed = {tid for tid, t in kg.items() if t.source_chunk in seed_chunks}
    if m == 0:
        return seed
    within = {tid for tid, t in kg.items() if t.head_key != t.tail_key and t.head_key in reached and t.tail_key in reached}
    return seed | within


# -- ranking oracle ------------------------------------------------------------


def py_cosine(a, b) -> float:
    dot = sum(float(x) * float(y) for x, y in zip(a, b))
    na = sum(float(x) * float(x) for x in a)
    nb = sum(float(y) * float(y) for y in b)
    return dot / (math.sqrt(na) * math.sqrt(nb))


def random_index(rng: random.Random, max_chunks: int = 1000, dim: int = 6) -> tuple[VectorIndex, np.ndarray]:
    """Small-integer vectors with deliberate duplicates, so exact ties occur."""
    n = rng.randint(1, max_chunks)
    rows: list[list[int]] = []
    while len(rows) < n:
        if rows and rng.random() < 0.3:
            rows.append(list(rng.choice(rows)))
            continue
        row = [rng.randint(-3, 3) for _ in range(dim)]
        if any(row):
            rows.append(row)
    ids = [f"chunk-{rng.randrange(10**6):06d}-{i}" for i in range(n)]
    rng.shuffle(ids)
    query = [0] * dim
    while not any(query):
        query = [rng.randint(-3, 3) for _ in range(dim)]
    return VectorIndex(ids, np.array(rows, dtype=np.float64), "test:ints:%d" % dim), np.array(query, dtype=np.float64)


def oracle_ranking(index: VectorIndex, query: np.ndarray) -> list[tuple[str, float]]:
    scored = [(cid, py_cosine(index.vector(cid), query)) for cid in index.chunk_ids]
    return sorted(scored, key=lambda p: (-p[1], p[0]))
