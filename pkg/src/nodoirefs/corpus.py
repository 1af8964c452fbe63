"""Streaming ingest of the single-file DBLP XML corpus.

The parser is built directly on expat so memory stays flat no matter how
large the snapshot is: records are assembled from SAX-style callbacks and
handed out as soon as their closing tag is seen.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Optional
from xml.parsers import expat

from .entities import entity_declarations
from .normalize import doi_from_url

logger = logging.getLogger(__name__)

PUB_TYPES = (
    "article",
    "inproceedings",
    "proceedings",
    "book",
    "incollection",
    "phdthesis",
    "mastersthesis",
    "www",
    "data",
)
# unknown top-level elements land here, original tag kept in raw_attrs["@element"]
FALLBACK_TYPE = "data"

ACCESS_VALUES = ("open", "closed", "unknown")

CHUNK_SIZE = 1 << 16

CSV_COLUMNS = ("key", "pub_type", "title", "authors", "year", "venue", "ee_links", "doi", "raw_attrs")


class CorpusParseError(Exception):
    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (at byte {byte_offset})")
        self.byte_offset = byte_offset


class IngestError(Exception):
    """Splitting aborted; ``partial_files`` lists what was left behind."""

    def __init__(self, message: str, partial_files: list[Path]):
        super().__init__(message)
        self.partial_files = partial_files


@dataclass(frozen=True)
class EeLink:
    url: str
    access: str = "unknown"


@dataclass(frozen=True)
class DblpRecord:
    key: str
    pub_type: str
    title: str = ""
    authors: tuple[str, ...] = ()
    year: Optional[int] = None
    venue: Optional[str] = None
    ee_links: tuple[EeLink, ...] = ()
    doi: Optional[str] = None
    raw_attrs: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "pub_type": self.pub_type,
            "title": self.title,
            "authors": list(self.authors),
            "year": self.year,
            "venue": self.venue,
            "ee_links": [[link.url, link.access] for link in self.ee_links],
            "doi": self.doi,
            "raw_attrs": dict(self.raw_attrs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DblpRecord":
        return cls(
            key=d["key"],
            pub_type=d["pub_type"],
            title=d.get("title", ""),
            authors=tuple(d.get("authors", ())),
            year=d.get("year"),
            venue=d.get("venue"),
            ee_links=tuple(EeLink(url, access) for url, access in d.get("ee_links", ())),
            doi=d.get("doi"),
            raw_attrs=dict(d.get("raw_attrs", {})),
        )


def extract_doi(record: DblpRecord) -> Optional[str]:
    """Normalized DOI of the first doi.org link among the record's ee links."""
    for link in record.ee_links:
        doi = doi_from_url(link.url)
        if doi:
            return doi
    return None


def select_oa_nodoi(records: Iterable[DblpRecord]) -> Iterator[DblpRecord]:
    """Keep records with an open-access link and no DOI link."""
    for record in records:
        if any(link.access == "open" for link in record.ee_links) and extract_doi(record) is None:
            yield record


def _access_of(attrs: dict[str, str]) -> str:
    kind = attrs.get("type", "").strip().lower()
    if kind == "oa":
        return "open"
    if kind == "closed":
        return "closed"
    return "unknown"


def _put(raw: dict[str, str], name: str, value: str) -> None:
    if name not in raw:
        raw[name] = value
        return
    n = 2
    while f"{name}#{n}" in raw:
        n += 1
    raw[f"{name}#{n}"] = value


class _Builder:
    """Accumulates expat callbacks into DblpRecords."""

    def __init__(self) -> None:
        self.depth = 0
        self.done: list[DblpRecord] = []
        self._reset()

    def _reset(self) -> None:
        self.tag: Optional[str] = None
        self.attrs: dict[str, str] = {}
        self.fields: list[tuple[str, dict[str, str], str]] = []
        self.field_tag: Optional[str] = None
        self.field_attrs: dict[str, str] = {}
        self.text: list[str] = []
        self.unknown_entities: list[str] = []

    def start(self, name: str, attrs: dict[str, str]) -> None:
        self.depth += 1
        if self.depth == 2:
            self._reset()
            self.tag = name
            self.attrs = attrs
        elif self.depth == 3:
            self.field_tag = name
            self.field_attrs = attrs
            self.text = []

    def end(self, name: str) -> None:
        if self.depth == 3 and self.field_tag is not None:
            self.fields.append((self.field_tag, self.field_attrs, "".join(self.text).strip()))
            self.field_tag = None
        elif self.depth == 2 and self.tag is not None:
            record = self._finish()
            if record is not None:
                self.done.append(record)
            self.tag = None
        self.depth -= 1

    def chars(self, data: str) -> None:
        if self.depth >= 3:
            self.text.append(data)

    def skipped(self, name: str, is_parameter_entity: bool) -> None:
        if is_parameter_entity:
            return
        if self.depth >= 3:
            self.text.append(f"&{name};")
        self.unknown_entities.append(name)

    def _finish(self) -> Optional[DblpRecord]:
        key = self.attrs.get("key", "").strip()
        if not key:
            logger.warning("skipping <%s> element without a key", self.tag)
            return None
        raw: dict[str, str] = {}
        pub_type = self.tag
        if pub_type not in PUB_TYPES:
            logger.warning("%s: unknown element type <%s>, stored as %s", key, pub_type, FALLBACK_TYPE)
            raw["@element"] = pub_type
            pub_type = FALLBACK_TYPE
        for attr, value in self.attrs.items():
            if attr != "key":
                raw["@" + attr] = value

        title = None
        authors: list[str] = []
        year = None
        venue = None
        links: list[EeLink] = []
        for tag, attrs, text in self.fields:
            if tag == "author":
                authors.append(text)
            elif tag == "title" and title is None:
                title = text
            elif tag == "year" and year is None and text.isascii() and text.isdigit():
                year = int(text)
            elif tag in ("booktitle", "journal") and venue is None:
                venue = text
            elif tag == "ee":
                links.append(EeLink(text, _access_of(attrs)))
                continue
            else:
                _put(raw, tag, text)
            for attr, value in attrs.items():
                _put(raw, f"{tag}@{attr}", value)

        if self.unknown_entities:
            logger.warning("%s: unknown entities kept verbatim: %s", key, ", ".join(sorted(set(self.unknown_entities))))

        record = DblpRecord(
            key=key,
            pub_type=pub_type,
            title=title or "",
            authors=tuple(authors),
            year=year,
            venue=venue,
            ee_links=tuple(links),
            raw_attrs=raw,
        )
        doi = extract_doi(record)
        if doi:
            record = replace(record, doi=doi)
        return record


def _make_parser(builder: _Builder) -> expat.XMLParserType:
    parser = expat.ParserCreate()
    parser.buffer_text = True
    parser.ordered_attributes = False
    # Supply the bundled entity table as the document's DTD, whatever the
    # DOCTYPE says, so snapshots parse without the dblp.dtd file on disk.
    parser.UseForeignDTD(True)
    parser.SetParamEntityParsing(expat.XML_PARAM_ENTITY_PARSING_ALWAYS)
    decls = entity_declarations()

    def external_entity(context, base, system_id, public_id):
        sub = parser.ExternalEntityParserCreate(context)
        sub.Parse(decls, True)
        return 1

    parser.ExternalEntityRefHandler = external_entity
    parser.StartElementHandler = builder.start
    parser.EndElementHandler = builder.end
    parser.CharacterDataHandler = builder.chars
    parser.SkippedEntityHandler = builder.skipped
    return parser


def parse_dblp_stream(source: BinaryIO, chunk_size: int = CHUNK_SIZE) -> Iterator[DblpRecord]:
    """Yield one DblpRecord per top-level publication element, in order.

    Raises CorpusParseError with the byte offset of the first
    well-formedness error.
    """
    builder = _Builder()
    parser = _make_parser(builder)
    while True:
        chunk = source.read(chunk_size)
        final = not chunk
        try:
            parser.Parse(chunk, final)
        except expat.ExpatError as exc:
            yield from builder.done
            raise CorpusParseError(expat.ErrorString(exc.code), parser.ErrorByteIndex) from None
        if builder.done:
            yield from builder.done
            builder.done.clear()
        if final:
            return


def parse_dblp_file(path: os.PathLike | str) -> Iterator[DblpRecord]:
    with open(path, "rb") as fh:
        yield from parse_dblp_stream(fh)


# --- per-type delimited files -------------------------------------------------

def _to_row(record: DblpRecord) -> list[str]:
    return [
        record.key,
        record.pub_type,
        record.title,
        json.dumps(list(record.authors), ensure_ascii=False),
        "" if record.year is None else str(record.year),
        "" if record.venue is None else record.venue,
        json.dumps([[link.url, link.access] for link in record.ee_links], ensure_ascii=False),
        record.doi or "",
        json.dumps(record.raw_attrs, ensure_ascii=False),
    ]


def _from_row(row: dict[str, str]) -> DblpRecord:
    return DblpRecord(
        key=row["key"],
        pub_type=row["pub_type"],
        title=row["title"],
        authors=tuple(json.loads(row["authors"])),
        year=int(row["year"]) if row["year"] else None,
        venue=row["venue"] or None,
        ee_links=tuple(EeLink(url, access) for url, access in json.loads(row["ee_links"])),
        doi=row["doi"] or None,
        raw_attrs=json.loads(row["raw_attrs"]),
    )


def split_by_type(records: Iterable[DblpRecord], out_dir: os.PathLike | str) -> dict[str, Path]:
    """Write one CSV file per publication type and a ``manifest.json``.

    Files are written under a ``.partial`` suffix and renamed only once the
    whole stream has been consumed; on failure the partial files stay on
    disk and are reported through IngestError.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    handles: dict[str, tuple] = {}
    counts: dict[str, int] = {}
    try:
        for record in records:
            entry = handles.get(record.pub_type)
            if entry is None:
                path = out / f"{record.pub_type}.csv.partial"
                fh = open(path, "w", encoding="utf-8", newline="")
                writer = csv.writer(fh, lineterminator="\r\n")
                writer.writerow(CSV_COLUMNS)
                entry = handles[record.pub_type] = (fh, writer, path)
                counts[record.pub_type] = 0
            entry[1].writerow(_to_row(record))
            counts[record.pub_type] += 1
    except BaseException as exc:
        for fh, _, _ in handles.values():
            fh.close()
        partial = [path for _, _, path in handles.values()]
        if isinstance(exc, (OSError, CorpusParseError)):
            raise IngestError(f"splitting aborted: {exc}", partial) from exc
        raise
    for fh, _, _ in handles.values():
        fh.close()

    result: dict[str, Path] = {}
    for pub_type, (_, _, partial_path) in sorted(handles.items()):
        final = out / f"{pub_type}.csv"
        os.replace(partial_path, final)
        result[pub_type] = final
    manifest = {pub_type: {"file": path.name, "rows": counts[pub_type]} for pub_type, path in result.items()}
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return result


def read_split_file(path: os.PathLike | str) -> Iterator[DblpRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            yield _from_row(row)


def write_records_csv(records: Iterable[DblpRecord], path: os.PathLike | str) -> int:
    """Write records in the split-file format; returns the row count."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(CSV_COLUMNS)
        for record in records:
            writer.writerow(_to_row(record))
            n += 1
    return n
