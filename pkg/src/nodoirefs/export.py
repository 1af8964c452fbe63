"""JSONL dataset writer and run statistics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import IO, Iterable

from .matcher import MATCHED_BY_DOI, MATCHED_BY_TITLE, UNMATCHED_WITH_DOI, CitationRecord, MatchResult

STAT_LABELS = (
    ("files_parsed", "Total Files Parsed"),
    ("references_evaluated", "Total References Evaluated"),
    ("dblp_keys_matched", "DBLP Keys Matched"),
    ("dois_matched_with_dblp_key", "DOIs Matched with DBLP Key"),
    ("dois_without_dblp_key", "DOIs without DBLP Key"),
)


class ExportError(Exception):
    def __init__(self, message: str, lines_written: int):
        super().__init__(f"{message} (after {lines_written} lines)")
        self.lines_written = lines_written


# JSON escapes ASCII control characters but not these, and many line readers
# (str.splitlines among them) treat them as line breaks
_LINE_BREAKS = {"\u0085": "\\u0085", "\u2028": "\\u2028", "\u2029": "\\u2029"}
_LINE_BREAK_TABLE = str.maketrans(_LINE_BREAKS)


def serialize(record: CitationRecord) -> str:
    """Canonical single-line JSON: fixed field order, no extra whitespace."""
    return json.dumps(record.to_obj(), ensure_ascii=False, separators=(",", ":")).translate(_LINE_BREAK_TABLE)


def parse_line(line: str) -> CitationRecord:
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("JSONL line is not an object")
    return CitationRecord.from_obj(obj)


def export_jsonl(records: Iterable[CitationRecord], sink: IO[str]) -> int:
    """Write one record per line to ``sink``; returns the number of lines."""
    n = 0
    for record in records:
        try:
            sink.write(serialize(record))
            sink.write("\n")
        except OSError as exc:
            raise ExportError(str(exc), n) from exc
        n += 1
    return n


@dataclass
class PipelineStats:
    files_parsed: int = 0
    references_evaluated: int = 0
    dblp_keys_matched: int = 0
    dois_matched_with_dblp_key: int = 0
    dois_without_dblp_key: int = 0

    def problems(self) -> list[str]:
        out = [f"{name} is negative" for name, value in asdict(self).items() if value < 0]
        if self.dois_matched_with_dblp_key > self.dblp_keys_matched:
            out.append("dois_matched_with_dblp_key exceeds dblp_keys_matched")
        if self.dblp_keys_matched + self.dois_without_dblp_key > self.references_evaluated:
            out.append("matched plus doi-only references exceed references evaluated")
        return out

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    def to_table(self) -> str:
        width = max(len(label) for _, label in STAT_LABELS)
        lines = [f"{'Statistic'.ljust(width)}  #", f"{'-' * width}  {'-' * 9}"]
        for name, label in STAT_LABELS:
            lines.append(f"{label.ljust(width)}  {getattr(self, name):,}")
        return "\n".join(lines) + "\n"


def compute_stats(match_results: Iterable[tuple[object, list[MatchResult]]]) -> PipelineStats:
    """Table-style counters over (document, results) pairs, counted per reference."""
    stats = PipelineStats()
    for _doc, results in match_results:
        stats.files_parsed += 1
        for result in results:
            stats.references_evaluated += 1
            if result.kind in (MATCHED_BY_DOI, MATCHED_BY_TITLE):
                stats.dblp_keys_matched += 1
                if result.doi:
                    stats.dois_matched_with_dblp_key += 1
            elif result.kind == UNMATCHED_WITH_DOI:
                stats.dois_without_dblp_key += 1
    return stats
