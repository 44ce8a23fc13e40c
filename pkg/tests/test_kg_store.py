from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import CREATED_AT, random_kg
from kgrag.kg_store import AssociationKG, KGError, Subgraph, Triplet


def kg_with(chunks: dict[str, str], triplets=()) -> AssociationKG:
    kg = AssociationKG(CREATED_AT)
    for chunk_id, doc_id in chunks.items():
        kg.register_chunk(chunk_id, doc_id)
    kg.insert_triplets(triplets)
    return kg


def test_insert_same_triplet_twice():
    kg = kg_with({"c1": "d"})
    assert kg.insert_triplets([Triplet("A", "r", "B", "c1"), Triplet("A", "r", "B", "c1")]) == 1
    assert kg.insert_triplets([Triplet("a", "R", "b", "c1")]) == 0
    assert len(kg) == 1


def test_same_fact_from_different_chunks_is_kept_twice():
    kg = kg_with({"c1": "d", "c2": "d"}, [Triplet("A", "r", "B", "c1"), Triplet("A", "r", "B", "c2")])
    assert len(kg) == 2


def test_insert_batch_of_three():
    kg = kg_with({"c1": "d"})
    assert kg.insert_triplets([Triplet("A", "r", "B", "c1"), Triplet("B", "r", "C", "c1"), Triplet("C", "r", "D", "c1")]) == 3


def test_dangling_chunk_rejects_whole_batch():
    kg = kg_with({"c1": "d"}, [Triplet("X", "r", "Y", "c1")])
    before = kg.to_snapshot()
    with pytest.raises(KGError):
        kg.insert_triplets([Triplet("A", "r", "B", "c1"), Triplet("B", "r", "C", "missing")])
    assert len(kg) == 1 and kg.to_snapshot() == before
    kg.check_consistency()


def test_triplet_rejects_empty_fields():
    with pytest.raises(ValueError):
        Triplet("A", "  ", "B", "c1")
    with pytest.raises(ValueError):
        Triplet("A", "r", "B", "")


def test_subgraph_for_chunks():
    t1, t2 = Triplet("A", "r", "B", "c1"), Triplet("B", "r", "C", "c2")
    kg = kg_with({"c1": "d", "c2": "d"}, [t1, t2])
    assert kg.subgraph_for_chunks([]) == Subgraph(frozenset(), frozenset())
    assert kg.subgraph_for_chunks(["c1", "nope"]) == Subgraph(frozenset({0}), frozenset({"a", "b"}))
    whole = kg.subgraph_for_chunks(["c1", "c2"])
    assert whole.triplet_ids == frozenset(tid for tid, _ in kg.items())
    assert whole.entities == {"a", "b", "c"}


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.sets(st.integers(0, 11)), st.sets(st.integers(0, 11)))
def test_subgraph_union_property(seed, a, b):
    kg = random_kg(random.Random(seed))
    ids = sorted(kg.registered_chunks)
    A, B = [ids[i] for i in a], [ids[i] for i in b]
    assert kg.subgraph_for_chunks(A + B) == kg.subgraph_for_chunks(A) | kg.subgraph_for_chunks(B)


def test_entity_neighborhood_examples():
    kg = kg_with({"c": "d"})
    assert kg.entity_neighborhood({"a"}) == (set(), set())
    kg.insert_triplets([Triplet("A", "r", "B", "c")])
    assert kg.entity_neighborhood({"a"}) == ({"b"}, {0})


def test_entity_neighborhood_star_matches_scan():
    triplets = [Triplet("A", "r", "B", "c"), Triplet("A", "r", "C", "c"), Triplet("B", "r", "C", "c")]
    kg = kg_with({"c": "d"}, triplets)
    adjacent, incident = kg.entity_neighborhood({"a"})
    scan_ids = {tid for tid, t in kg.items() if "a" in (t.head_key, t.tail_key)}
    scan_adj = {k for tid in scan_ids for k in (kg.triplet(tid).head_key, kg.triplet(tid).tail_key)} - {"a"}
    assert (adjacent, incident) == ({"b", "c"}, {0, 1}) == (scan_adj, scan_ids)


def test_self_loops_stored_but_not_traversed():
    kg = kg_with({"c": "d"}, [Triplet("A", "is", "a", "c"), Triplet("A", "r", "B", "c")])
    assert len(kg) == 2
    assert kg.entity_neighborhood({"a"}) == ({"b"}, {1})
    assert kg.triplets_within({"a", "b"}) == {1}


def test_remove_unknown_document():
    kg = kg_with({"c": "d"}, [Triplet("A", "r", "B", "c")])
    assert kg.remove_document("other") == 0
    assert len(kg) == 1


def test_remove_document_matches_rebuild():
    keep = [Triplet("A", "r", "B", "k1"), Triplet("B", "r", "C", "k2")]
    gone = [Triplet("C", "r", "D", "g1"), Triplet("D", "r", "E", "g1"), Triplet("E", "r", "F", "g2"), Triplet("A", "r", "F", "g2")]
    chunks = {"k1": "keep", "k2": "keep", "g1": "gone", "g2": "gone"}
    kg = kg_with(chunks, keep + gone)
    assert kg.remove_document("gone") == 4
    rebuilt = kg_with({"k1": "keep", "k2": "keep"}, keep)
    assert kg.to_snapshot() == rebuilt.to_snapshot()
    assert set(kg.entity_index) == {"a", "b", "c"}
    assert kg.entity_index == rebuilt.entity_index
    kg.check_consistency()


def test_insert_then_remove_is_byte_identical():
    kg = kg_with({"c1": "base"}, [Triplet("A", "r", "B", "c1")])
    before = kg.to_snapshot()
    kg.register_chunk("n1", "new")
    kg.insert_triplets([Triplet("B", "r", "Z", "n1"), Triplet("Z", "r", "Q", "n1")])
    kg.remove_document("new")
    assert kg.to_snapshot() == before
    # Ids continue from the same place after the round trip.
    kg.register_chunk("n1", "new")
    kg.insert_triplets([Triplet("Y", "r", "B", "n1")])
    assert [tid for tid, _ in kg.items()] == [0, 1]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_index_consistency_under_random_updates(seed):
    rng = random.Random(seed)
    kg = random_kg(rng)
    kg.check_consistency()
    for tid, t in kg.items():
        assert tid in kg.entity_index[t.head_key] and tid in kg.entity_index[t.tail_key]
        assert tid in kg.chunk_index[t.source_chunk]
    kg.remove_document(f"d{rng.randrange(4)}")
    kg.check_consistency()


def test_snapshot_round_trip(tmp_path):
    kg = random_kg(random.Random(3))
    kg.save(tmp_path / "kg.jsonl")
    loaded = AssociationKG.load(tmp_path / "kg.jsonl")
    assert loaded.to_snapshot() == kg.to_snapshot()
    assert loaded.entity_index == kg.entity_index and loaded.doc_index == kg.doc_index
    header = (tmp_path / "kg.jsonl").read_text().splitlines()[0]
    assert header == '{"created_at": "%s", "version": 1}' % CREATED_AT


def test_snapshot_rejects_unknown_version():
    with pytest.raises(KGError):
        AssociationKG.from_snapshot('{"version": 99, "created_at": "x"}\n')


def test_restricted_view_keeps_ids():
    kg = kg_with({"c1": "d", "c2": "d"}, [Triplet("A", "r", "B", "c1"), Triplet("B", "r", "C", "c2")])
    view = kg.restricted({"c2"})
    assert [tid for tid, _ in view.items()] == [1]
    assert view.entity_neighborhood({"b"}) == ({"c"}, {1})
    view.check_consistency()
    assert len(kg) == 2


def test_copy_is_independent():
    kg = kg_with({"c1": "d"}, [Triplet("A", "r", "B", "c1")])
    clone = kg.copy()
    clone.insert_triplets([Triplet("B", "r", "C", "c1")])
    assert len(kg) == 1 and len(clone) == 2


def test_display_name_keeps_first_surface_form():
    kg = kg_with({"c": "d"}, [Triplet("New York", "r", "X", "c"), Triplet("NEW YORK", "s", "Y", "c")])
    assert kg.display_name("new york") == "New York"
