"""Command-line entry point: ingest, extract-kg, query, eval, serve, remove-doc, stats."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus import CorpusError, load_documents_jsonl, load_hotpot_corpus
from .evaluation import load_category_map, run_eval, shuffle_entities
from .kg_builder import ExtractionProgress, load_triplet_file, triplet_stats
from .kg_store import KGError
from .llm import ProviderError
from .pipeline import Engine, Snapshot, build_providers, load_config

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_ERROR) -> None:
        super().__init__(message)
        self.code = code


def _require(path: str | None, what: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        raise CliError(f"{what} not found: {p}", EXIT_USAGE)
    return p


def _engine(args: argparse.Namespace) -> Engine:
    cfg = load_config(args.config)
    if args.workspace:
        cfg = cfg.with_overrides(workspace=args.workspace)
    return Engine.load(cfg, build_providers(cfg))


def _load_docs(path: Path, engine: Engine):
    if path.suffix == ".jsonl":
        return load_documents_jsonl(path), []
    dataset = load_hotpot_corpus(path, engine.cfg.chunking)
    return dataset.documents, dataset.examples


def cmd_ingest(args: argparse.Namespace) -> int:
    path = _require(args.path, "corpus")
    triplets_path = _require(args.triplets, "triplet file")
    engine = _engine(args)
    docs, _ = _load_docs(path, engine)
    triplets = load_triplet_file(triplets_path) if triplets_path else []
    report = engine.ingest(docs, triplets, extract=args.extract)
    engine.save()
    print(
        f"ingested {report.new_documents} new and {report.replaced_documents} changed document(s), "
        f"{report.new_chunks} new chunk(s), {report.triplets_added} triplet(s); "
        f"{report.unchanged_documents} unchanged"
    )
    if report.triplets_unmatched:
        print(f"warning: {report.triplets_unmatched} triplet(s) cite chunks not in the corpus (check chunking.max_units)", file=sys.stderr)
    if report.failed_chunks:
        print(f"extraction failed for {len(report.failed_chunks)} chunk(s): {', '.join(report.failed_chunks)}", file=sys.stderr)
    return EXIT_OK


def cmd_extract_kg(args: argparse.Namespace) -> int:
    triplets_path = _require(args.triplets, "triplet file")
    engine = _engine(args)
    if triplets_path:
        added = engine.add_triplets(load_triplet_file(triplets_path))
        print(f"inserted {added} triplet(s)")
    else:
        progress_path = Path(args.progress) if args.progress else Path(engine.cfg.workspace) / "extraction_progress.json"
        progress = ExtractionProgress.from_json(progress_path.read_text()) if progress_path.exists() else ExtractionProgress()
        engine.extract(progress)
        progress_path.parent.mkdir(parents=True, exist_ok=True)
        progress_path.write_text(progress.to_json())
        print(f"extracted {len(progress.done)} chunk(s), {len(progress.failed)} failed, {progress.skipped_lines} unparseable line(s)")
    engine.save()
    return EXIT_OK


def _query_overrides(args: argparse.Namespace) -> dict:
    return {
        "budget_k": args.top_k,
        "seed_k": args.seed_k if args.seed_k is not None else args.top_k,
        "m": args.hops,
        "expansion": False if args.no_expansion else None,
        "organization": False if args.no_organization else None,
        "keep_unlinked_seeds": args.keep_unlinked_seeds,
    }


def cmd_query(args: argparse.Namespace) -> int:
    engine = _engine(args)
    result = engine.query(args.question, **_query_overrides(args))
    print(result.answer.text)
    if args.explain:
        print(json.dumps(result.to_dict(), indent=2, sort_keys=True, ensure_ascii=False))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    path = _require(args.dataset, "dataset")
    engine = _engine(args)
    cfg = engine.cfg.with_overrides(**_query_overrides(args))
    dataset = load_hotpot_corpus(path, cfg.chunking)
    snapshot, examples = engine.snapshot, dataset.examples
    if args.categories:
        shuffled = shuffle_entities(snapshot.corpus, snapshot.kg, examples, load_category_map(_require(args.categories, "category map")), args.seed)
        snapshot = Snapshot.build(shuffled.corpus, shuffled.kg, engine.providers.embedder)
        examples = shuffled.examples
    report = run_eval(examples, snapshot, cfg, engine.providers, args.setting, args.parallelism)
    if args.output:
        Path(args.output).write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.render_table())
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    engine = _engine(args)
    uvicorn.run(create_app(engine, persist=True), host=args.host, port=args.port)
    return EXIT_OK


def cmd_remove_doc(args: argparse.Namespace) -> int:
    engine = _engine(args)
    removed = engine.remove_document(args.doc_id)
    if removed is None:
        raise CliError(f"unknown document: {args.doc_id}")
    engine.save()
    print(f"removed document {args.doc_id} ({removed} triplet(s))")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    engine = _engine(args)
    print(json.dumps(triplet_stats(engine.snapshot.kg).to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _add_retrieval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--top-k", type=int, default=None, help="chunk budget k (default 10)")
    p.add_argument("--seed-k", type=int, default=None, help="seed chunks (defaults to --top-k)")
    p.add_argument("--hops", type=int, default=None, help="expansion hops m (default 1)")
    p.add_argument("--no-expansion", action="store_true")
    p.add_argument("--no-organization", action="store_true")
    p.add_argument("--keep-unlinked-seeds", dest="keep_unlinked_seeds", action="store_true", default=None)
    p.add_argument("--drop-unlinked-seeds", dest="keep_unlinked_seeds", action="store_false")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgrag", description="Knowledge-graph guided retrieval for RAG.")
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--workspace", help="directory holding corpus, KG and index")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="chunk and index documents")
    p.add_argument("path", help="HotpotQA-shape .json or documents .jsonl")
    p.add_argument("--triplets", help="pre-extracted triplets JSONL")
    p.add_argument("--extract", action="store_true", help="extract triplets with the configured LLM")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract-kg", help="build the KG for the ingested corpus")
    p.add_argument("--triplets", help="load pre-extracted triplets instead of calling the LLM")
    p.add_argument("--progress", help="resumable progress file")
    p.set_defaults(func=cmd_extract_kg)

    p = sub.add_parser("query", help="answer a question")
    p.add_argument("question")
    p.add_argument("--explain", action="store_true", help="dump seeds, subgraph, trees and bundle as JSON")
    _add_retrieval_flags(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="evaluate on a HotpotQA-shape dataset")
    p.add_argument("dataset")
    p.add_argument("--setting", choices=["distractor", "fullwiki"], default="distractor")
    p.add_argument("--output", help="write the JSON report here")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--categories", help="entity category map JSONL; enables the shuffle variant")
    p.add_argument("--seed", type=int, default=0, help="shuffle seed")
    _add_retrieval_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("remove-doc", help="remove a document from corpus, index and KG")
    p.add_argument("doc_id")
    p.set_defaults(func=cmd_remove_doc)

    p = sub.add_parser("stats", help="print triplet extraction statistics")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProviderError as exc:
        print(f"error: provider failure after {exc.attempts} attempt(s): {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (CorpusError, KGError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
