"""Embedded, file-backed document store for DBLP metadata.

Records are kept as JSON documents in SQLite with two secondary indexes
(normalized DOI, normalized title). Lookups return candidate lists;
deciding between candidates is the matcher's job.
"""

from __future__ import annotations

import json
import os
import sqlite3
import threading
from pathlib import Path
from typing import Iterable, Optional

from .corpus import DblpRecord
from .normalize import normalize_doi, normalize_title

SCHEMA_VERSION = 1

_SCHEMA = """
CREATE TABLE IF NOT EXISTS meta (name TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS records (
    key TEXT PRIMARY KEY,
    doc TEXT NOT NULL,
    doi TEXT,
    norm_title TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS records_by_doi ON records (doi) WHERE doi IS NOT NULL;
CREATE INDEX IF NOT EXISTS records_by_norm_title ON records (norm_title);
"""


class StoreError(Exception):
    pass


class MetadataStore:
    """Handle on an open store. Use as a context manager or call close()."""

    def __init__(self, location: os.PathLike | str, *, read_only: bool = False):
        self.location = Path(location)
        self.read_only = read_only
        if read_only:
            if not self.location.exists():
                raise StoreError(f"no store at {self.location}")
            uri = f"file:{self.location}?mode=ro"
            self._conn = sqlite3.connect(uri, uri=True, check_same_thread=False)
        else:
            self.location.parent.mkdir(parents=True, exist_ok=True)
            self._conn = sqlite3.connect(self.location, check_same_thread=False)
            self._conn.executescript(_SCHEMA)
            self._conn.execute(
                "INSERT OR IGNORE INTO meta (name, value) VALUES ('schema_version', ?)",
                (str(SCHEMA_VERSION),),
            )
            self._conn.commit()
        row = self._conn.execute("SELECT value FROM meta WHERE name = 'schema_version'").fetchone()
        if row is None or int(row[0]) != SCHEMA_VERSION:
            self._conn.close()
            raise StoreError(f"{self.location}: unsupported store version {row and row[0]}")
        # sqlite connections are not safe for concurrent use from several threads
        self._lock = threading.Lock()

    def __enter__(self) -> "MetadataStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        self._conn.close()

    # writes

    def upsert(self, record: DblpRecord) -> "MetadataStore":
        self.upsert_many([record])
        return self

    def upsert_many(self, records: Iterable[DblpRecord], batch_size: int = 5000) -> int:
        if self.read_only:
            raise StoreError("store opened read-only")
        n = 0
        batch = []
        with self._lock:
            try:
                for record in records:
                    if not record.key:
                        raise StoreError("record without key")
                    batch.append(self._row(record))
                    if len(batch) >= batch_size:
                        n += self._flush(batch)
                n += self._flush(batch)
                self._conn.commit()
            except sqlite3.Error as exc:
                self._conn.rollback()
                raise StoreError(str(exc)) from exc
        return n

    @staticmethod
    def _row(record: DblpRecord) -> tuple:
        doi = normalize_doi(record.doi) if record.doi else None
        doc = json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True)
        return (record.key, doc, doi or None, normalize_title(record.title))

    def _flush(self, batch: list) -> int:
        self._conn.executemany(
            "INSERT INTO records (key, doc, doi, norm_title) VALUES (?, ?, ?, ?) "
            "ON CONFLICT(key) DO UPDATE SET doc = excluded.doc, doi = excluded.doi, "
            "norm_title = excluded.norm_title",
            batch,
        )
        n = len(batch)
        batch.clear()
        return n

    # reads

    def _query(self, sql: str, args: tuple) -> list[DblpRecord]:
        with self._lock:
            rows = self._conn.execute(sql, args).fetchall()
        return [DblpRecord.from_dict(json.loads(doc)) for (doc,) in rows]

    def get_by_key(self, key: str) -> Optional[DblpRecord]:
        found = self._query("SELECT doc FROM records WHERE key = ?", (key,))
        return found[0] if found else None

    def get_by_doi(self, doi: str) -> list[DblpRecord]:
        norm = normalize_doi(doi)
        if not norm:
            return []
        return self._query("SELECT doc FROM records WHERE doi = ? ORDER BY key", (norm,))

    def get_by_title(self, title: str) -> list[DblpRecord]:
        norm = normalize_title(title)
        if not norm:
            return []
        return self._query("SELECT doc FROM records WHERE norm_title = ? ORDER BY key", (norm,))

    @property
    def record_count(self) -> int:
        with self._lock:
            return self._conn.execute("SELECT COUNT(*) FROM records").fetchone()[0]

    def stats(self) -> dict:
        with self._lock:
            dois = self._conn.execute("SELECT COUNT(DISTINCT doi) FROM records WHERE doi IS NOT NULL").fetchone()[0]
            titles = self._conn.execute("SELECT COUNT(DISTINCT norm_title) FROM records").fetchone()[0]
            count = self._conn.execute("SELECT COUNT(*) FROM records").fetchone()[0]
        return {
            "location": str(self.location),
            "schema_version": SCHEMA_VERSION,
            "record_count": count,
            "index_sizes": {"by_key": count, "by_doi": dois, "by_norm_title": titles},
        }

    def iter_records(self):
        with self._lock:
            rows = self._conn.execute("SELECT doc FROM records ORDER BY key").fetchall()
        for (doc,) in rows:
            yield DblpRecord.from_dict(json.loads(doc))
