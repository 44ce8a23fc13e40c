"""Documents, sentence-boundary chunking, and HotpotQA-shape dataset loading."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)

DEFAULT_MAX_UNITS = 100

# Tokens that end in "." without ending a sentence. Compared case-insensitively,
# without the trailing period.
ABBREVIATIONS = frozenset(
    {
        "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "ft", "vs",
        "etc", "inc", "ltd", "co", "corp", "no", "vol", "fig", "al", "approx",
        "gen", "col", "lt", "sgt", "capt", "gov", "sen", "rep", "rev", "hon",
        "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct",
        "nov", "dec", "e.g", "i.e", "u.s", "u.k", "a.m", "p.m", "d.c",
    }
)

_BOUNDARY = re.compile(r"[.!?]+[\"'\)\]]*(?=\s|$)")


class CorpusError(Exception):
    """Raised for unreadable or malformed corpus input."""


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str
    # Pre-split sentences (HotpotQA ships these); when present they are packed
    # as-is instead of re-splitting ``text``.
    sentences: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    seq: int
    text: str

    def to_dict(self) -> dict:
        return {"chunk_id": self.chunk_id, "doc_id": self.doc_id, "seq": self.seq, "text": self.text}

    @classmethod
    def from_dict(cls, data: dict) -> "Chunk":
        return cls(str(data["chunk_id"]), str(data["doc_id"]), int(data["seq"]), str(data["text"]))


@dataclass(frozen=True)
class ChunkingConfig:
    max_units: int = DEFAULT_MAX_UNITS
    sentence_splitter: str = "punct-v1"

    def __post_init__(self) -> None:
        if self.max_units < 1:
            raise ValueError("max_units must be >= 1")
        if self.sentence_splitter != "punct-v1":
            raise ValueError(f"unknown sentence splitter {self.sentence_splitter!r}")


@dataclass
class QaExample:
    query_id: str
    question: str
    gold_answer: str
    gold_support: frozenset[str] = frozenset()
    # Documents provided with the question (distractor setting).
    doc_ids: tuple[str, ...] = ()


def make_chunk_id(doc_id: str, seq: int) -> str:
    return f"{doc_id}#{seq}"


def count_units(text: str) -> int:
    return len(text.split())


def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())


def _is_abbreviation(text: str, punct_start: int) -> bool:
    if text[punct_start] != ".":
        return False
    word_start = punct_start
    while word_start > 0 and not text[word_start - 1].isspace():
        word_start -= 1
    word = text[word_start:punct_start].lstrip("\"'([").lower()
    if not word:
        return False
    if word in ABBREVIATIONS:
        return True
    # Single-letter initials such as "J. R. R. Tolkien".
    return len(word) == 1 and word.isalpha()


def split_sentences(text: str) -> list[str]:
    """Split on ``.``, ``!`` or ``?`` followed by whitespace or end of text.

    Periods that terminate a known abbreviation or a single-letter initial do
    not end a sentence.
    """
    sentences: list[str] = []
    start = 0
    for match in _BOUNDARY.finditer(text):
        if _is_abbreviation(text, match.start()):
            continue
        piece = text[start : match.end()].strip()
        if piece:
            sentences.append(piece)
        start = match.end()
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def _pack(sentences: Iterable[str], max_units: int) -> tuple[list[str], list[int | None]]:
    """Greedy packing. Returns chunk texts and, per input sentence, its chunk seq."""
    chunks: list[list[str]] = []
    placement: list[int | None] = []
    current: list[str] = []
    current_units = 0
    for sentence in sentences:
        sentence = sentence.strip()
        if not sentence:
            placement.append(None)
            continue
        units = count_units(sentence)
        if current and current_units + units > max_units:
            chunks.append(current)
            current, current_units = [], 0
        current.append(sentence)
        current_units += units
        placement.append(len(chunks))
    if current:
        chunks.append(current)
    return [" ".join(parts) for parts in chunks], placement


def split_document(doc: Document, cfg: ChunkingConfig | None = None) -> list[Chunk]:
    return chunk_document(doc, cfg)[0]


def chunk_document(doc: Document, cfg: ChunkingConfig | None = None) -> tuple[list[Chunk], list[int | None]]:
    """Chunk ``doc`` and also return the sentence -> chunk seq placement."""
    cfg = cfg or ChunkingConfig()
    sentences = list(doc.sentences) if doc.sentences is not None else split_sentences(doc.text)
    texts, placement = _pack(sentences, cfg.max_units)
    chunks = [Chunk(make_chunk_id(doc.doc_id, seq), doc.doc_id, seq, text) for seq, text in enumerate(texts)]
    return chunks, placement


class Corpus:
    """Immutable collection of documents and their chunks.

    Mutating operations return a new ``Corpus``; existing instances can be
    shared across threads.
    """

    def __init__(self, documents: Iterable[Document] = (), chunks: Iterable[Chunk] = ()) -> None:
        self._documents: dict[str, Document] = {}
        for doc in documents:
            if doc.doc_id in self._documents:
                raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
            self._documents[doc.doc_id] = doc
        self._chunks: dict[str, Chunk] = {}
        self._by_doc: dict[str, list[str]] = {}
        for chunk in chunks:
            if chunk.chunk_id in self._chunks:
                raise CorpusError(f"duplicate chunk_id {chunk.chunk_id!r}")
            self._chunks[chunk.chunk_id] = chunk
            self._by_doc.setdefault(chunk.doc_id, []).append(chunk.chunk_id)

    @classmethod
    def from_documents(cls, documents: Iterable[Document], cfg: ChunkingConfig | None = None) -> "Corpus":
        documents = list(documents)
        chunks = [c for doc in documents for c in split_document(doc, cfg)]
        return cls(documents, chunks)

    def __len__(self) -> int:
        return len(self._chunks)

    def __contains__(self, chunk_id: object) -> bool:
        return chunk_id in self._chunks

    def __iter__(self) -> Iterator[Chunk]:
        return iter(self._chunks.values())

    @property
    def documents(self) -> list[Document]:
        return list(self._documents.values())

    @property
    def chunks(self) -> list[Chunk]:
        return list(self._chunks.values())

    def document(self, doc_id: str) -> Document | None:
        return self._documents.get(doc_id)

    def chunk(self, chunk_id: str) -> Chunk:
        return self._chunks[chunk_id]

    def get(self, chunk_id: str) -> Chunk | None:
        return self._chunks.get(chunk_id)

    def text(self, chunk_id: str) -> str:
        return self._chunks[chunk_id].text

    def chunks_of(self, doc_id: str) -> list[Chunk]:
        return [self._chunks[cid] for cid in self._by_doc.get(doc_id, [])]

    def with_document(self, doc: Document, cfg: ChunkingConfig | None = None) -> "Corpus":
        """Return a corpus where ``doc`` replaces any document with the same id."""
        base = self.without_document(doc.doc_id)
        return Corpus([*base.documents, doc], [*base.chunks, *split_document(doc, cfg)])

    def without_document(self, doc_id: str) -> "Corpus":
        if doc_id not in self._documents and doc_id not in self._by_doc:
            return self
        return Corpus(
            [d for d in self._documents.values() if d.doc_id != doc_id],
            [c for c in self._chunks.values() if c.doc_id != doc_id],
        )

    def write_chunks(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for chunk in self._chunks.values():
                fh.write(json.dumps(chunk.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def read_chunks(path: str | Path) -> list[Chunk]:
    chunks = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                chunks.append(Chunk.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad chunk record: {exc}") from exc
    return chunks


@dataclass
class HotpotDataset:
    """Result of loading a HotpotQA-shape file.

    Unpacks as ``documents, examples`` for the common case.
    """

    documents: list[Document]
    examples: list[QaExample]
    corpus: Corpus
    warnings: list[str] = field(default_factory=list)

    def __iter__(self) -> Iterator:
        return iter((self.documents, self.examples))


def _json_error(path: Path, raw: bytes, exc: json.JSONDecodeError) -> CorpusError:
    byte_offset = len(exc.doc[: exc.pos].encode("utf-8"))
    return CorpusError(f"{path}: invalid JSON at byte {byte_offset} (line {exc.lineno}, col {exc.colno}): {exc.msg}")


def load_hotpot_corpus(path: str | Path, cfg: ChunkingConfig | None = None) -> HotpotDataset:
    """Load a HotpotQA-shape JSON array.

    Each context title becomes one document (shared across records by title).
    Supporting facts are resolved to the chunk holding the cited sentence;
    unresolvable ones are dropped with a warning and the example is kept.
    Malformed records are skipped and reported with their index.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such corpus file: {path}")
    raw = path.read_bytes()
    try:
        records = json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise _json_error(path, raw, exc) from exc
    if not isinstance(records, list):
        raise CorpusError(f"{path}: expected a JSON array of records")

    warnings: list[str] = []
    documents: dict[str, Document] = {}
    placements: dict[str, list[int | None]] = {}
    chunks: list[Chunk] = []
    pending: list[tuple[int, dict, list[str]]] = []

    for index, record in enumerate(records):
        try:
            question = str(record["question"])
            answer = str(record["answer"])
            context = record["context"]
            support = record.get("supporting_facts", [])
            parsed = [(str(title), tuple(str(s) for s in sentences)) for title, sentences in context]
        except (KeyError, TypeError, ValueError) as exc:
            warnings.append(f"record {index}: malformed ({exc.__class__.__name__}: {exc}); skipped")
            continue
        titles = []
        for title, sentences in parsed:
            titles.append(title)
            if title in documents:
                if documents[title].sentences != sentences:
                    warnings.append(f"record {index}: context {title!r} differs from first occurrence; keeping first")
                continue
            doc = Document(title, title, " ".join(s.strip() for s in sentences if s.strip()), sentences)
            documents[title] = doc
            doc_chunks, placements[title] = chunk_document(doc, cfg)
            chunks.extend(doc_chunks)
        pending.append((index, {"question": question, "answer": answer, "support": support, "id": record.get("_id")}, titles))

    examples = []
    for index, fields, titles in pending:
        gold: set[str] = set()
        for fact in fields["support"]:
            try:
                title, sent_idx = str(fact[0]), int(fact[1])
            except (TypeError, ValueError, IndexError):
                warnings.append(f"record {index}: malformed supporting fact {fact!r}; dropped")
                continue
            placement = placements.get(title) if title in titles else None
            seq = placement[sent_idx] if placement is not None and 0 <= sent_idx < len(placement) else None
            if seq is None:
                warnings.append(f"record {index}: supporting fact ({title!r}, {sent_idx}) not found; dropped")
                continue
            gold.add(make_chunk_id(title, seq))
        query_id = str(fields["id"]) if fields["id"] is not None else str(index)
        examples.append(QaExample(query_id, fields["question"], fields["answer"], frozenset(gold), tuple(titles)))

    for message in warnings:
        logger.warning(message)
    docs = list(documents.values())
    return HotpotDataset(docs, examples, Corpus(docs, chunks), warnings)


def load_documents_jsonl(path: str | Path) -> list[Document]:
    """Read plain documents, one ``{doc_id, title?, text}`` object per line."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                docs.append(Document(str(data["doc_id"]), str(data.get("title", data["doc_id"])), str(data["text"])))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad document record: {exc}") from exc
    return docs
