"""Association KG: triplets linked to their source chunks, with entity/chunk/doc indexes."""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

SNAPSHOT_VERSION = 1


def normalize_text(value: str) -> str:
    """NFC, trim, and collapse internal whitespace. Keeps the surface form."""
    return " ".join(unicodedata.normalize("NFC", value).split())


def entity_key(value: str) -> str:
    """Index key for entity (and relation) equality."""
    return normalize_text(value).casefold()


class KGError(Exception):
    pass


@dataclass(frozen=True)
class Triplet:
    head: str
    relation: str
    tail: str
    source_chunk: str

    def __post_init__(self) -> None:
        for name in ("head", "relation", "tail"):
            object.__setattr__(self, name, normalize_text(str(getattr(self, name))))
        if not (self.head and self.relation and self.tail and self.source_chunk):
            raise ValueError(f"triplet fields must be non-empty: {self!r}")

    @property
    def head_key(self) -> str:
        return entity_key(self.head)

    @property
    def tail_key(self) -> str:
        return entity_key(self.tail)

    @property
    def identity(self) -> tuple[str, str, str, str]:
        return (self.head_key, entity_key(self.relation), self.tail_key, self.source_chunk)

    @property
    def is_self_loop(self) -> bool:
        return self.head_key == self.tail_key


@dataclass(frozen=True)
class Subgraph:
    triplet_ids: frozenset[int]
    entities: frozenset[str]

    def __len__(self) -> int:
        return len(self.triplet_ids)

    def __or__(self, other: "Subgraph") -> "Subgraph":
        return Subgraph(self.triplet_ids | other.triplet_ids, self.entities | other.entities)


EMPTY_SUBGRAPH = Subgraph(frozenset(), frozenset())


def _add(index: dict[str, set[int]], key: str, tid: int) -> None:
    index.setdefault(key, set()).add(tid)


def _discard(index: dict[str, set[int]], key: str, tid: int) -> None:
    ids = index.get(key)
    if ids is None:
        return
    ids.discard(tid)
    if not ids:
        del index[key]


class AssociationKG:
    """Triplet store where every triplet records the chunk it came from.

    Triplet ids are assigned in insertion order and never reused while a
    higher id is alive, so iteration by id is deterministic. Chunks must be
    registered (with their document) before triplets can cite them.

    Not synchronized: treat an instance as single-writer, and hand readers a
    :meth:`copy` when writes may happen concurrently.
    """

    def __init__(self, created_at: str | None = None) -> None:
        self.created_at = created_at or datetime.now(timezone.utc).isoformat(timespec="seconds")
        self._records: dict[int, Triplet] = {}
        self._identity: dict[tuple[str, str, str, str], int] = {}
        self.entity_index: dict[str, set[int]] = {}
        self.chunk_index: dict[str, set[int]] = {}
        self.doc_index: dict[str, set[int]] = {}
        self._chunk_doc: dict[str, str] = {}
        self._next_id = 0

    # -- chunk registry -------------------------------------------------

    def register_chunk(self, chunk_id: str, doc_id: str) -> None:
        known = self._chunk_doc.get(chunk_id)
        if known is not None and known != doc_id:
            raise KGError(f"chunk {chunk_id!r} already registered to document {known!r}")
        self._chunk_doc[chunk_id] = doc_id

    def register_chunks(self, chunks: Iterable) -> None:
        for chunk in chunks:
            self.register_chunk(chunk.chunk_id, chunk.doc_id)

    def has_chunk(self, chunk_id: str) -> bool:
        return chunk_id in self._chunk_doc

    def doc_of(self, chunk_id: str) -> str:
        return self._chunk_doc[chunk_id]

    @property
    def registered_chunks(self) -> dict[str, str]:
        return dict(self._chunk_doc)

    # -- records --------------------------------------------------------

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self._records))

    def triplet(self, tid: int) -> Triplet:
        return self._records[tid]

    def items(self) -> list[tuple[int, Triplet]]:
        return sorted(self._records.items())

    def insert_triplets(self, batch: Iterable[Triplet]) -> int:
        """Insert a batch atomically. Exact duplicates are ignored.

        Raises ``KGError`` without modifying anything if any triplet cites an
        unregistered chunk.
        """
        batch = list(batch)
        missing = sorted({t.source_chunk for t in batch if t.source_chunk not in self._chunk_doc})
        if missing:
            raise KGError(f"unknown source chunk(s): {', '.join(missing[:5])}")
        inserted = 0
        for triplet in batch:
            ident = triplet.identity
            if ident in self._identity:
                continue
            tid = self._next_id
            self._next_id += 1
            self._records[tid] = triplet
            self._identity[ident] = tid
            _add(self.entity_index, triplet.head_key, tid)
            _add(self.entity_index, triplet.tail_key, tid)
            _add(self.chunk_index, triplet.source_chunk, tid)
            _add(self.doc_index, self._chunk_doc[triplet.source_chunk], tid)
            inserted += 1
        return inserted

    def _delete(self, tid: int) -> None:
        triplet = self._records.pop(tid)
        del self._identity[triplet.identity]
        _discard(self.entity_index, triplet.head_key, tid)
        _discard(self.entity_index, triplet.tail_key, tid)
        _discard(self.chunk_index, triplet.source_chunk, tid)
        _discard(self.doc_index, self._chunk_doc[triplet.source_chunk], tid)

    def remove_document(self, doc_id: str) -> int:
        """Drop every triplet sourced from ``doc_id`` and unregister its chunks."""
        tids = sorted(self.doc_index.get(doc_id, ()))
        for tid in tids:
            self._delete(tid)
        for chunk_id in [c for c, d in self._chunk_doc.items() if d == doc_id]:
            del self._chunk_doc[chunk_id]
        self._next_id = max(self._records) + 1 if self._records else 0
        return len(tids)

    # -- queries --------------------------------------------------------

    def subgraph(self, triplet_ids: Iterable[int]) -> Subgraph:
        ids = frozenset(triplet_ids)
        entities = set()
        for tid in ids:
            t = self._records[tid]
            entities.add(t.head_key)
            entities.add(t.tail_key)
        return Subgraph(ids, frozenset(entities))

    def subgraph_for_chunks(self, chunk_ids: Iterable[str]) -> Subgraph:
        ids: set[int] = set()
        for chunk_id in chunk_ids:
            ids.update(self.chunk_index.get(chunk_id, ()))
        return self.subgraph(ids)

    def entity_neighborhood(self, entities: Iterable[str]) -> tuple[set[str], set[int]]:
        """Entities sharing a triplet with any input entity, and those triplets.

        Self-loops are never traversed. Inputs are excluded from the result.
        """
        entities = set(entities)
        adjacent: set[str] = set()
        incident: set[int] = set()
        for entity in entities:
            for tid in self.entity_index.get(entity, ()):
                t = self._records[tid]
                if t.is_self_loop:
                    continue
                incident.add(tid)
                adjacent.add(t.tail_key if t.head_key == entity else t.head_key)
        return adjacent - entities, incident

    def triplets_within(self, entities: Iterable[str]) -> set[int]:
        """Non-self-loop triplets whose head and tail both lie in ``entities``."""
        entities = set(entities)
        found = set()
        for entity in entities:
            for tid in self.entity_index.get(entity, ()):
                t = self._records[tid]
                if not t.is_self_loop and t.head_key in entities and t.tail_key in entities:
                    found.add(tid)
        return found

    def display_name(self, key: str) -> str:
        """First-inserted surface form for an entity key."""
        for tid in sorted(self.entity_index.get(key, ())):
            t = self._records[tid]
            return t.head if t.head_key == key else t.tail
        return key

    # -- copies and views -----------------------------------------------

    def copy(self) -> "AssociationKG":
        kg = AssociationKG(self.created_at)
        kg._records = dict(self._records)
        kg._identity = dict(self._identity)
        kg.entity_index = {k: set(v) for k, v in self.entity_index.items()}
        kg.chunk_index = {k: set(v) for k, v in self.chunk_index.items()}
        kg.doc_index = {k: set(v) for k, v in self.doc_index.items()}
        kg._chunk_doc = dict(self._chunk_doc)
        kg._next_id = self._next_id
        return kg

    def restricted(self, chunk_ids: Iterable[str]) -> "AssociationKG":
        """A KG holding only triplets from ``chunk_ids``; triplet ids are preserved."""
        keep = set(chunk_ids)
        kg = AssociationKG(self.created_at)
        for chunk_id in keep:
            if chunk_id in self._chunk_doc:
                kg._chunk_doc[chunk_id] = self._chunk_doc[chunk_id]
        for chunk_id in keep:
            for tid in self.chunk_index.get(chunk_id, ()):
                t = self._records[tid]
                kg._records[tid] = t
                kg._identity[t.identity] = tid
                _add(kg.entity_index, t.head_key, tid)
                _add(kg.entity_index, t.tail_key, tid)
                _add(kg.chunk_index, chunk_id, tid)
                _add(kg.doc_index, self._chunk_doc[chunk_id], tid)
        kg._next_id = self._next_id
        return kg

    # -- persistence ----------------------------------------------------

    def to_snapshot(self) -> str:
        lines = [json.dumps({"version": SNAPSHOT_VERSION, "created_at": self.created_at}, sort_keys=True)]
        for tid, t in self.items():
            record = {
                "id": tid,
                "head": t.head,
                "relation": t.relation,
                "tail": t.tail,
                "chunk_id": t.source_chunk,
                "doc_id": self._chunk_doc[t.source_chunk],
            }
            lines.append(json.dumps(record, ensure_ascii=False, sort_keys=True))
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(self.to_snapshot(), encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def from_snapshot(cls, text: str) -> "AssociationKG":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise KGError("empty KG snapshot")
        header = json.loads(lines[0])
        if header.get("version") != SNAPSHOT_VERSION:
            raise KGError(f"unsupported snapshot version {header.get('version')!r}")
        kg = cls(header.get("created_at"))
        for lineno, line in enumerate(lines[1:], 2):
            try:
                rec = json.loads(line)
                tid = int(rec["id"])
                t = Triplet(rec["head"], rec["relation"], rec["tail"], rec["chunk_id"])
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise KGError(f"snapshot line {lineno}: {exc}") from exc
            kg.register_chunk(t.source_chunk, rec["doc_id"])
            kg._records[tid] = t
            kg._identity[t.identity] = tid
            _add(kg.entity_index, t.head_key, tid)
            _add(kg.entity_index, t.tail_key, tid)
            _add(kg.chunk_index, t.source_chunk, tid)
            _add(kg.doc_index, rec["doc_id"], tid)
        kg._next_id = max(kg._records) + 1 if kg._records else 0
        return kg

    @classmethod
    def load(cls, path: str | Path) -> "AssociationKG":
        return cls.from_snapshot(Path(path).read_text(encoding="utf-8"))

    def check_consistency(self) -> None:
        """Raise ``AssertionError`` if any index disagrees with the record set."""
        entity_index: dict[str, set[int]] = {}
        chunk_index: dict[str, set[int]] = {}
        doc_index: dict[str, set[int]] = {}
        for tid, t in self._records.items():
            assert t.source_chunk in self._chunk_doc, f"dangling chunk {t.source_chunk}"
            _add(entity_index, t.head_key, tid)
            _add(entity_index, t.tail_key, tid)
            _add(chunk_index, t.source_chunk, tid)
            _add(doc_index, self._chunk_doc[t.source_chunk], tid)
        assert entity_index == self.entity_index
        assert chunk_index == self.chunk_index
        assert doc_index == self.doc_index
        assert {t.identity: tid for tid, t in self._records.items()} == self._identity
