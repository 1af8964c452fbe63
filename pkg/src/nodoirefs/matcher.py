"""DOI-first, title-fallback resolution of extracted references.

A reference is looked up by its DOI when it has one; a hit ends the
search. Otherwise (or on a DOI miss) the normalized title is tried.
Title hits are exact after normalization, never fuzzy, and an ambiguous
candidate set is treated as no match at all.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol, Sequence

from .corpus import DblpRecord
from .normalize import normalize_doi
from .tei import ExtractedDocument, ExtractedReference

logger = logging.getLogger(__name__)

MATCHED_BY_DOI = "matched_by_doi"
MATCHED_BY_TITLE = "matched_by_title"
UNMATCHED_WITH_DOI = "unmatched_with_doi"
DROPPED = "dropped"
KINDS = (MATCHED_BY_DOI, MATCHED_BY_TITLE, UNMATCHED_WITH_DOI, DROPPED)


class InvariantViolation(Exception):
    pass


class Lookup(Protocol):
    def get_by_doi(self, doi: str) -> list[DblpRecord]: ...

    def get_by_title(self, title: str) -> list[DblpRecord]: ...


@dataclass(frozen=True)
class MatchResult:
    kind: str
    reference: ExtractedReference
    dblp_id: Optional[str] = None
    doi: Optional[str] = None

    def check(self) -> None:
        """Raise InvariantViolation if identifier presence contradicts the kind."""
        has_id, has_doi = self.dblp_id is not None, self.doi is not None
        ok = {
            MATCHED_BY_DOI: has_id and has_doi,
            MATCHED_BY_TITLE: has_id,
            UNMATCHED_WITH_DOI: has_doi and not has_id,
            DROPPED: not has_id and not has_doi,
        }.get(self.kind, False)
        if not ok or not self.reference.raw_text:
            raise InvariantViolation(
                f"bad {self.kind} result for reference #{self.reference.ordinal}: "
                f"dblp_id={self.dblp_id!r} doi={self.doi!r}"
            )

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dblp_id": self.dblp_id, "doi": self.doi, "reference": self.reference.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "MatchResult":
        return cls(
            kind=d["kind"],
            reference=ExtractedReference.from_dict(d["reference"]),
            dblp_id=d.get("dblp_id"),
            doi=d.get("doi"),
        )


def disambiguate(candidates: Sequence[DblpRecord], ref: ExtractedReference) -> Optional[DblpRecord]:
    if len(candidates) == 1:
        return candidates[0]
    if len(candidates) > 1 and ref.year is not None:
        same_year = [c for c in candidates if c.year == ref.year]
        if len(same_year) == 1:
            return same_year[0]
    return None


def match_reference(ref: ExtractedReference, store: Lookup) -> MatchResult:
    doi = normalize_doi(ref.doi) if ref.doi else None
    doi = doi or None
    if doi:
        hit = disambiguate(store.get_by_doi(doi), ref)
        if hit is not None:
            return MatchResult(MATCHED_BY_DOI, ref, dblp_id=hit.key, doi=doi)
    if ref.title:
        hit = disambiguate(store.get_by_title(ref.title), ref)
        if hit is not None:
            # the DOI reported is DBLP's, not the reference's: it was not found by DOI
            return MatchResult(MATCHED_BY_TITLE, ref, dblp_id=hit.key, doi=hit.doi)
    if doi:
        return MatchResult(UNMATCHED_WITH_DOI, ref, doi=doi)
    return MatchResult(DROPPED, ref)


def match_document(doc: ExtractedDocument, store: Lookup) -> list[MatchResult]:
    return [match_reference(ref, store) for ref in doc.references]


# --- output records ----------------------------------------------------------

def record_id(citing_key: str) -> str:
    """24 hex digits, stable for a given citing key."""
    return hashlib.blake2b(citing_key.encode("utf-8"), digest_size=12).hexdigest()


@dataclass(frozen=True)
class CitationRecord:
    id: str
    citing_key: str
    cited_papers: tuple[dict, ...] = field(default_factory=tuple)

    def to_obj(self) -> dict:
        return {
            "_id": {"$oid": self.id},
            "citing_paper": {"dblp_id": self.citing_key},
            "cited_papers": [_ordered_cited(c) for c in self.cited_papers],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "CitationRecord":
        return cls(
            id=obj["_id"]["$oid"],
            citing_key=obj["citing_paper"]["dblp_id"],
            cited_papers=tuple(_ordered_cited(c) for c in obj["cited_papers"]),
        )

    def violations(self) -> list[str]:
        problems = []
        for i, cited in enumerate(self.cited_papers):
            if not (cited.get("dblp_id") or cited.get("doi")):
                problems.append(f"{self.citing_key}: cited_papers[{i}] has neither dblp_id nor doi")
            if not cited.get("bibliographic_reference"):
                problems.append(f"{self.citing_key}: cited_papers[{i}] lacks bibliographic_reference")
        return problems


def _ordered_cited(cited: dict) -> dict:
    out = {}
    for name in ("dblp_id", "doi", "bibliographic_reference"):
        if cited.get(name) is not None:
            out[name] = cited[name]
    return out


def _display_doi(result: MatchResult) -> str:
    written = result.reference.doi_text
    if result.kind != MATCHED_BY_TITLE and written and normalize_doi(written) == result.doi:
        return written
    return result.doi


def build_citation_record(citing_key: str, results: Iterable[MatchResult]) -> Optional[CitationRecord]:
    """Assemble the output record for one citing paper.

    Dropped results are left out and repeated citations (same dblp_id, or
    same DOI for unmatched ones) keep their first occurrence. Returns None
    if nothing survives.
    """
    cited: list[dict] = []
    seen: set[tuple[str, str]] = set()
    for result in sorted(results, key=lambda r: r.reference.ordinal):
        if result.kind == DROPPED:
            continue
        ident = ("dblp_id", result.dblp_id) if result.dblp_id else ("doi", result.doi)
        if ident in seen:
            continue
        seen.add(ident)
        entry: dict = {}
        if result.dblp_id:
            entry["dblp_id"] = result.dblp_id
        if result.doi:
            entry["doi"] = _display_doi(result)
        entry["bibliographic_reference"] = result.reference.raw_text
        cited.append(entry)
    if not cited:
        return None
    return CitationRecord(id=record_id(citing_key), citing_key=citing_key, cited_papers=tuple(cited))


def check_results(results: Iterable[MatchResult], *, strict: bool) -> list[str]:
    """Validate MatchResult invariants; raise under strict, else log and return problems."""
    problems = []
    for result in results:
        try:
            result.check()
        except InvariantViolation as exc:
            if strict:
                raise
            logger.warning("%s", exc)
            problems.append(str(exc))
    return problems
