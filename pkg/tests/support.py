"""Shared test helpers: synthetic corpora, brute-force oracles, fixture runs."""

from __future__ import annotations

import random
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Optional
from xml.sax.saxutils import escape, quoteattr

from nodoirefs.corpus import DblpRecord, EeLink
from nodoirefs.fixture import Fixture, materialize
from nodoirefs.matcher import (
    DROPPED,
    MATCHED_BY_DOI,
    MATCHED_BY_TITLE,
    UNMATCHED_WITH_DOI,
    MatchResult,
)
from nodoirefs.mock import MockExtractionService, MockWebServer
from nodoirefs.normalize import normalize_doi, normalize_title
from nodoirefs.pipeline import load_config, run
from nodoirefs.tei import ExtractedReference

XML_HEADER = '<?xml version="1.0" encoding="ISO-8859-1"?>\n<!DOCTYPE dblp SYSTEM "dblp.dtd">\n<dblp>\n'
XML_FOOTER = "</dblp>\n"


def record_xml(
    key: str,
    pub_type: str = "inproceedings",
    title: str = "A Title.",
    authors=("A. Author",),
    year: Optional[int] = 2020,
    ee=(),
) -> str:
    """One DBLP element; title and authors are raw XML content, ``ee`` holds (url, type or None) pairs."""
    parts = [f"<{pub_type} key={quoteattr(key)} mdate=\"2022-11-01\">"]
    parts += [f"<author>{a}</author>" for a in authors]
    parts.append(f"<title>{title}</title>")
    if year is not None:
        parts.append(f"<year>{year}</year>")
    for url, kind in ee:
        attr = f" type={quoteattr(kind)}" if kind else ""
        parts.append(f"<ee{attr}>{escape(url)}</ee>")
    parts.append(f"</{pub_type}>")
    return "".join(parts) + "\n"


def corpus_bytes(*elements: str) -> bytes:
    return (XML_HEADER + "".join(elements) + XML_FOOTER).encode("latin-1", "xmlcharrefreplace")


def write_synthetic_corpus(path: Path, n: int, seed: int = 0) -> Path:
    """DBLP-like corpus of ``n`` records with entities, links and mixed types."""
    rng = random.Random(seed)
    types = ("inproceedings", "article", "proceedings", "phdthesis")
    with open(path, "w", encoding="latin-1") as fh:
        fh.write(XML_HEADER)
        for i in range(n):
            ee = [(f"https://example.org/pdf/{i}.pdf", "oa")]
            if rng.random() < 0.5:
                ee.append((f"https://doi.org/10.5555/syn.{i}", None))
            fh.write(
                record_xml(
                    f"conf/syn/R{i}",
                    types[i % len(types)],
                    title=f"Synthetic K&uuml;hn paper number {i} on {rng.choice(('joins', 'graphs', 'caches'))}.",
                    authors=(f"Author {i}", f"Co M&uuml;ller {i % 97}"),
                    year=1990 + i % 33,
                    ee=ee,
                )
            )
        fh.write(XML_FOOTER)
    return path


# --- randomized matcher corpora -------------------------------------------------

_WORDS = ("join", "graph", "index", "query", "stream", "cache", "learning", "systèmes", "Über", "model")


def _random_title(rng: random.Random) -> str:
    return " ".join(rng.choice(_WORDS) for _ in range(rng.randint(1, 3))).capitalize() + rng.choice((".", "", "?"))


def _vary_title(rng: random.Random, title: str) -> str:
    title = rng.choice((title, title.upper(), title.lower(), title.replace(" ", "  "), f"  {title} ", title + "!!"))
    return title


def _vary_doi(rng: random.Random, doi: str) -> str:
    return rng.choice((doi, doi.upper(), f"https://doi.org/{doi}", f"doi:{doi}.", f"DOI: https://dx.doi.org/{doi}"))


def random_store_records(rng: random.Random, n: int) -> list[DblpRecord]:
    records = []
    doi_pool = [f"10.{rng.randint(1000, 1010)}/x.{i}" for i in range(max(1, n // 2))]
    for i in range(n):
        doi = rng.choice(doi_pool) if rng.random() < 0.6 else None
        records.append(
            DblpRecord(
                key=f"k/{rng.randint(0, n)}",  # duplicate keys on purpose; upsert keeps the last
                pub_type=rng.choice(("article", "inproceedings")),
                title=_random_title(rng),
                year=rng.choice((None, 2008, 2009, 2010)),
                ee_links=(EeLink(f"https://doi.org/{doi}"),) if doi else (),
                doi=normalize_doi(doi) if doi else None,
            )
        )
    return records


def random_references(rng: random.Random, records: list[DblpRecord], n: int) -> list[ExtractedReference]:
    refs = []
    for i in range(n):
        src = rng.choice(records) if records and rng.random() < 0.7 else None
        if src is not None:
            title = _vary_title(rng, src.title) if rng.random() < 0.8 else _random_title(rng)
            doi = _vary_doi(rng, src.doi) if src.doi and rng.random() < 0.6 else None
        else:
            title = _random_title(rng) if rng.random() < 0.8 else None
            doi = f"10.9999/miss.{i}" if rng.random() < 0.4 else None
        if rng.random() < 0.05:
            title = "?!"
        refs.append(
            ExtractedReference(
                raw_text=f"ref {i} {title or ''}",
                ordinal=i,
                title=title,
                doi=normalize_doi(doi) if doi else None,
                year=rng.choice((None, 2008, 2009, 2010)),
            )
        )
    return refs


class BruteForce:
    """Linear scan over the stored records using the shared normalizers."""

    def __init__(self, records: list[DblpRecord]):
        latest = {}
        for r in records:
            latest[r.key] = r
        self.rows = [(r, normalize_doi(r.doi) if r.doi else "", normalize_title(r.title)) for r in latest.values()]

    def by_doi(self, doi: str) -> list[DblpRecord]:
        d = normalize_doi(doi)
        return [r for r, rd, _ in self.rows if d and rd == d]

    def by_title(self, title: str) -> list[DblpRecord]:
        t = normalize_title(title)
        return [r for r, _, rt in self.rows if t and rt == t]


def _pick(cands: list[DblpRecord], year: Optional[int]) -> Optional[DblpRecord]:
    if len(cands) == 1:
        return cands[0]
    if year is not None:
        same = [c for c in cands if c.year == year]
        if len(same) == 1:
            return same[0]
    return None


def oracle_match(ref: ExtractedReference, scan: BruteForce) -> tuple:
    """(kind, dblp_id, doi) the cascade should produce for ``ref``."""
    doi = normalize_doi(ref.doi) if ref.doi else ""
    if doi:
        hit = _pick(scan.by_doi(doi), ref.year)
        if hit:
            return (MATCHED_BY_DOI, hit.key, doi)
    if ref.title:
        hit = _pick(scan.by_title(ref.title), ref.year)
        if hit:
            return (MATCHED_BY_TITLE, hit.key, hit.doi)
    if doi:
        return (UNMATCHED_WITH_DOI, None, doi)
    return (DROPPED, None, None)


def as_tuple(result: MatchResult) -> tuple:
    return (result.kind, result.dblp_id, result.doi)


# --- fixture pipeline runs -----------------------------------------------------

@dataclass
class FixtureRun:
    code: int
    workdir: Path
    fixture: Fixture
    service: MockExtractionService
    host: MockWebServer
    reports: list
    error: str

    @property
    def dataset(self) -> bytes:
        return (self.workdir / "export" / "dataset.jsonl").read_bytes()


def fast_flags(**extra) -> dict:
    flags = {"harvest.backoff": 0.01, "harvest.max_backoff": 0.05, "service.backoff": 0.01, "service.max_backoff": 0.05}
    flags.update(extra)
    return flags


def run_fixture(tmp_path: Path, name: str = "corpus", *, stages=("all",), consolidate: bool = False,
                proxy: Optional[str] = None, with_failures: bool = True, **flags) -> FixtureRun:
    """Materialize a bundled fixture, start its mocks and run pipeline stages."""
    # reruns in the same directory reuse the port, so the corpus file is unchanged
    port_file = tmp_path / "pdf-host.port"
    port = int(port_file.read_text()) if port_file.exists() else 0
    host = MockWebServer(port=port).start()
    tmp_path.mkdir(parents=True, exist_ok=True)
    port_file.write_text(str(host.port))
    try:
        fixture = materialize(tmp_path / "input", host.url, name)
        host.routes.update(fixture.routes)
        service = fixture.extraction_service(with_failures=with_failures)
        with service:
            cfg = load_config(
                None,
                fast_flags(
                    workdir=str(tmp_path / "work"),
                    corpus_path=str(fixture.corpus_path),
                    extraction_endpoint=service.url,
                    consolidate_citations=consolidate,
                    proxy=proxy,
                    **flags,
                ),
                environ={},
            )
            code, reports, error = 0, [], ""
            for stage in stages:
                code, rep, error = run(stage, cfg)
                reports += rep
                if code:
                    break
    finally:
        host.stop()
    return FixtureRun(code, cfg.workdir, fixture, service, host, reports, error)


def random_word(rng: random.Random, n: int = 8) -> str:
    return "".join(rng.choice(string.ascii_lowercase) for _ in range(n))
