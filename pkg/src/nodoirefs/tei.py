"""TEI XML bibliography -> compact per-document JSON."""

from __future__ import annotations

import json
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Optional

from .normalize import find_doi_token, normalize_doi, tidy_doi

TEI_NS = "http://www.tei-c.org/ns/1.0"
NS = {"tei": TEI_NS}

_YEAR = re.compile(r"(?<!\d)(\d{4})(?!\d)")


class TeiConversionError(Exception):
    pass


@dataclass(frozen=True)
class ExtractedReference:
    raw_text: str
    ordinal: int
    title: Optional[str] = None
    doi: Optional[str] = None
    authors: tuple[str, ...] = ()
    year: Optional[int] = None
    venue: Optional[str] = None
    # DOI as written in the source (case preserved); matching uses ``doi``
    doi_text: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "ordinal": self.ordinal,
            "raw_text": self.raw_text,
            "title": self.title,
            "doi": self.doi,
            "doi_text": self.doi_text,
            "authors": list(self.authors),
            "year": self.year,
            "venue": self.venue,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractedReference":
        return cls(
            raw_text=d["raw_text"],
            ordinal=d["ordinal"],
            title=d.get("title"),
            doi=d.get("doi"),
            authors=tuple(d.get("authors", ())),
            year=d.get("year"),
            venue=d.get("venue"),
            doi_text=d.get("doi_text") or d.get("doi"),
        )


@dataclass(frozen=True)
class ExtractedDocument:
    key: str
    references: tuple[ExtractedReference, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"key": self.key, "references": [ref.to_dict() for ref in self.references]}

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractedDocument":
        refs = sorted((ExtractedReference.from_dict(r) for r in d.get("references", ())), key=lambda r: r.ordinal)
        return cls(key=d["key"], references=tuple(refs))

    def to_json(self) -> str:
        # nulls and empty lists dropped to keep the files small
        compact = {
            "key": self.key,
            "references": [
                {
                    k: v
                    for k, v in ref.to_dict().items()
                    if v is not None and v != [] and not (k == "doi_text" and v == ref.doi)
                }
                for ref in self.references
            ],
        }
        return json.dumps(compact, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ExtractedDocument":
        return cls.from_dict(json.loads(text))


def _collapse(text: str) -> str:
    return " ".join(text.split())


def _text(el: Optional[ET.Element]) -> Optional[str]:
    if el is None:
        return None
    value = _collapse("".join(el.itertext()))
    return value or None


def _person(pers: ET.Element) -> Optional[str]:
    parts = [_text(el) for el in pers.findall("tei:forename", NS)]
    parts.append(_text(pers.find("tei:surname", NS)))
    name = " ".join(p for p in parts if p)
    return name or None


def _authors(parent: Optional[ET.Element]) -> list[str]:
    if parent is None:
        return []
    names = []
    for author in parent.findall("tei:author", NS):
        pers = author.find("tei:persName", NS)
        name = _person(pers) if pers is not None else _text(author)
        if name:
            names.append(name)
    return names


def parse_year(value: Optional[str]) -> Optional[int]:
    if not value:
        return None
    m = _YEAR.search(value)
    if m is None:
        return None
    year = int(m.group(1))
    return year if 1500 <= year <= 2100 else None


def _raw_text(bibl: ET.Element) -> str:
    for note in bibl.iter(f"{{{TEI_NS}}}note"):
        if note.get("type") == "raw_reference":
            raw = _text(note)
            if raw:
                return raw
    # element boundaries separate words even when the TEI has no whitespace there
    return _collapse(" ".join(bibl.itertext()))


def _reference(bibl: ET.Element, ordinal: int) -> Optional[ExtractedReference]:
    raw = _raw_text(bibl)
    if not raw:
        return None
    analytic = bibl.find("tei:analytic", NS)
    monogr = bibl.find("tei:monogr", NS)

    title = venue = None
    if analytic is not None:
        title = _text(analytic.find("tei:title", NS))
        if monogr is not None:
            venue = _text(monogr.find("tei:title", NS))
    elif monogr is not None:
        title = _text(monogr.find("tei:title", NS))

    authors = _authors(analytic) or _authors(monogr)

    year = None
    date = bibl.find(".//tei:imprint/tei:date", NS)
    if date is None:
        date = bibl.find(".//tei:date", NS)
    if date is not None:
        year = parse_year(date.get("when")) or parse_year(_text(date))

    doi_text = None
    for idno in bibl.iter(f"{{{TEI_NS}}}idno"):
        if (idno.get("type") or "").upper() == "DOI" and _text(idno):
            doi_text = tidy_doi(_text(idno)) or None
            break
    if doi_text is None:
        doi_text = find_doi_token(raw)
    doi = normalize_doi(doi_text) if doi_text else None

    return ExtractedReference(
        raw_text=raw,
        ordinal=ordinal,
        title=title,
        doi=doi,
        authors=tuple(authors),
        year=year,
        venue=venue,
        doi_text=doi_text,
    )


def convert(key: str, tei_xml: str | bytes) -> ExtractedDocument:
    """Pull every bibliography entry out of a TEI document.

    Only ``biblStruct`` entries inside a ``listBibl`` are considered, so the
    header's own description of the citing paper is ignored. A document
    without a bibliography gives an empty reference list. Entries carrying
    no text at all are skipped; ordinals stay contiguous.
    """
    if not key:
        raise ValueError("empty document key")
    try:
        root = ET.fromstring(tei_xml)
    except ET.ParseError as exc:
        raise TeiConversionError(f"{key}: malformed TEI: {exc}") from exc

    refs: list[ExtractedReference] = []
    for list_bibl in root.iter(f"{{{TEI_NS}}}listBibl"):
        for bibl in list_bibl.findall("tei:biblStruct", NS):
            ref = _reference(bibl, len(refs))
            if ref is not None:
                refs.append(ref)
    return ExtractedDocument(key=key, references=tuple(refs))


def document_filename(key: str) -> str:
    return f"{safe_key(key)}.json"


def safe_key(key: str) -> str:
    """Filesystem-safe rendering of a DBLP key (``conf/a/B`` -> ``conf__a__B``)."""
    return key.replace("/", "__").replace("\\", "__")
