"""Command-line entry point: ``nodoirefs run <stage>``, ``store stats``, ``demo``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .fixture import materialize
from .mock import MockWebServer
from .pipeline import EXIT_FAILED, EXIT_MISSING, STAGES, ConfigError, load_config, run
from .store import MetadataStore, StoreError


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--workdir", help="directory holding all stage outputs")
    p.add_argument("--corpus", dest="corpus_path", help="DBLP XML file")
    p.add_argument("--endpoint", dest="extraction_endpoint", help="extraction service base URL")
    p.add_argument("--consolidate", dest="consolidate_citations", action="store_const", const=True,
                   help="ask the extraction service to consolidate citations")
    p.add_argument("--strict", action="store_const", const=True, help="invariant violations abort with exit 3")
    p.add_argument("--concurrency", type=int, help="parallel requests per stage")


def _flags(args: argparse.Namespace) -> dict:
    keys = ("workdir", "corpus_path", "extraction_endpoint", "consolidate_citations", "strict", "concurrency")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nodoirefs", description="Build a citation dataset for DBLP papers without DOIs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one stage or all of them")
    p_run.add_argument("stage", choices=(*STAGES, "all"))
    _add_common(p_run)

    p_store = sub.add_parser("store", help="inspect the metadata store")
    p_store.add_argument("action", choices=("stats",))
    _add_common(p_store)

    p_demo = sub.add_parser("demo", help="run the bundled fixture against in-process mock services")
    p_demo.add_argument("--workdir", help="defaults to a fresh temporary directory")
    p_demo.add_argument("--fixture", choices=("corpus", "single"), default="corpus")
    p_demo.add_argument("--consolidate", dest="consolidate_citations", action="store_true")
    return parser


def _print_reports(reports, error: str) -> None:
    for report in reports:
        print(report.line())
    if error:
        print(f"error: {error}", file=sys.stderr)


def _cmd_run(args) -> int:
    cfg = load_config(args.config, _flags(args))
    code, reports, error = run(args.stage, cfg)
    _print_reports(reports, error)
    return code


def _cmd_store(args) -> int:
    cfg = load_config(args.config, _flags(args))
    db = cfg.workdir / "store" / "metadata.sqlite"
    if not db.exists():
        print(f"error: {db} not found; run the 'load-store' stage first", file=sys.stderr)
        return EXIT_MISSING
    with MetadataStore(db, read_only=True) as store:
        print(json.dumps(store.stats(), indent=2))
    return 0


def _cmd_demo(args) -> int:
    workdir = Path(args.workdir) if args.workdir else Path(tempfile.mkdtemp(prefix="nodoirefs-demo-"))
    # the PDF host must be up before the corpus can point at it
    host = MockWebServer().start()
    try:
        fixture = materialize(workdir / "input", host.url, args.fixture)
        host.routes.update(fixture.routes)
        with fixture.extraction_service() as service:
            cfg = load_config(
                None,
                {
                    "workdir": str(workdir),
                    "corpus_path": str(fixture.corpus_path),
                    "extraction_endpoint": service.url,
                    "consolidate_citations": args.consolidate_citations,
                    "harvest.backoff": 0.05,
                    "service.backoff": 0.05,
                },
                environ={},
            )
            code, reports, error = run("all", cfg)
    finally:
        host.stop()
    _print_reports(reports, error)
    if code == 0:
        dataset = workdir / "export" / "dataset.jsonl"
        same = dataset.read_bytes() == fixture.golden_dataset.read_bytes()
        print(f"dataset: {dataset}")
        print(f"matches bundled golden file: {'yes' if same else 'NO'}")
        print((workdir / "export" / "stats.txt").read_text(), end="")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "store":
            return _cmd_store(args)
        return _cmd_demo(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except StoreError as exc:
        print(f"store error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
