"""Polite downloader for open-access PDFs referenced by DBLP ee links."""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional
from urllib.parse import urlsplit

import requests

from .corpus import DblpRecord
from .tei import safe_key

logger = logging.getLogger(__name__)

PDF_MAGIC = b"%PDF-"

OK = "ok"
HTTP_ERROR = "http_error"
NOT_PDF = "not_pdf"
TIMEOUT = "timeout"
SKIPPED_EXISTING = "skipped_existing"

DEFAULT_USER_AGENT = "nodoirefs-harvester/0.1"


@dataclass
class HarvestPolicy:
    max_concurrency: int = 4
    per_host_rate: int = 2  # simultaneous requests allowed per host
    retries: int = 3
    timeout: float = 30.0
    backoff: float = 1.0
    max_backoff: float = 60.0
    max_redirects: int = 5
    user_agent: str = DEFAULT_USER_AGENT


@dataclass
class HarvestManifestEntry:
    key: str
    source_url: str
    local_path: str
    status: str
    bytes: int
    fetched_at: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, separators=(",", ":"))


def pdf_filename(key: str) -> str:
    return safe_key(key) + ".pdf"


def is_pdf_file(path: os.PathLike | str) -> bool:
    try:
        with open(path, "rb") as fh:
            return fh.read(len(PDF_MAGIC)) == PDF_MAGIC
    except OSError:
        return False


def _stamp(ts: Optional[float] = None) -> str:
    when = datetime.fromtimestamp(ts if ts is not None else time.time(), tz=timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def backoff_delay(attempt: int, base: float, cap: float) -> float:
    """Exponential backoff with full jitter on top: base*2^attempt + U(0, base)."""
    return min(cap, base * (2 ** attempt)) + random.uniform(0, base)


class _HostGate:
    def __init__(self, limit: int):
        self.limit = max(1, limit)
        self._lock = threading.Lock()
        self._sems: dict[str, threading.BoundedSemaphore] = defaultdict(lambda: threading.BoundedSemaphore(self.limit))

    def __call__(self, url: str) -> threading.BoundedSemaphore:
        host = (urlsplit(url).hostname or "").lower()
        with self._lock:
            return self._sems[host]


def _make_session(policy: HarvestPolicy, proxies: Optional[dict] = None) -> requests.Session:
    session = requests.Session()
    session.headers["User-Agent"] = policy.user_agent
    session.max_redirects = policy.max_redirects
    if proxies:
        session.proxies.update(proxies)
    return session


def _download(url: str, dest: Path, session: requests.Session, policy: HarvestPolicy, gate: _HostGate) -> tuple[str, int]:
    part = dest.with_name(dest.name + ".part")
    status = HTTP_ERROR
    for attempt in range(policy.retries + 1):
        if attempt:
            time.sleep(backoff_delay(attempt - 1, policy.backoff, policy.max_backoff))
        retryable = False
        with gate(url):
            try:
                with session.get(url, stream=True, timeout=policy.timeout, allow_redirects=True) as resp:
                    if resp.status_code >= 500 or resp.status_code == 429:
                        status, retryable = HTTP_ERROR, True
                    elif resp.status_code >= 400:
                        return HTTP_ERROR, 0
                    else:
                        size = 0
                        with open(part, "wb") as fh:
                            for chunk in resp.iter_content(64 * 1024):
                                fh.write(chunk)
                                size += len(chunk)
                        if size == 0 or not is_pdf_file(part):
                            part.unlink(missing_ok=True)
                            return NOT_PDF, 0
                        os.replace(part, dest)
                        return OK, size
            except requests.Timeout:
                status, retryable = TIMEOUT, True
            except requests.TooManyRedirects:
                return HTTP_ERROR, 0
            except requests.RequestException as exc:
                logger.debug("%s: %s", url, exc)
                status, retryable = HTTP_ERROR, True
            finally:
                part.unlink(missing_ok=True)
        if not retryable:
            break
        logger.info("retrying %s (attempt %d failed with %s)", url, attempt + 1, status)
    return status, 0


def _harvest_one(
    record: DblpRecord,
    out_dir: Path,
    session: requests.Session,
    policy: HarvestPolicy,
    gate: _HostGate,
    previous: dict[str, str],
) -> list[HarvestManifestEntry]:
    dest = out_dir / pdf_filename(record.key)
    links = [link.url for link in record.ee_links if link.access == "open"]
    if dest.exists() and dest.stat().st_size > 0 and is_pdf_file(dest):
        st = dest.stat()
        url = previous.get(record.key) or (links[0] if links else "")
        return [HarvestManifestEntry(record.key, url, str(dest), SKIPPED_EXISTING, st.st_size, _stamp(st.st_mtime))]
    entries = []
    for url in links:
        status, size = _download(url, dest, session, policy, gate)
        if status == OK:
            stamp = _stamp(dest.stat().st_mtime)
            entries.append(HarvestManifestEntry(record.key, url, str(dest), OK, size, stamp))
            break
        entries.append(HarvestManifestEntry(record.key, url, str(dest), status, 0, _stamp()))
        logger.warning("%s: %s from %s", record.key, status, url)
    return entries


def harvest(
    records: Iterable[DblpRecord],
    out_dir: os.PathLike | str,
    policy: Optional[HarvestPolicy] = None,
    *,
    session: Optional[requests.Session] = None,
    proxies: Optional[dict] = None,
    previous: Iterable[HarvestManifestEntry] = (),
) -> list[HarvestManifestEntry]:
    """Download one PDF per record, trying its open links in order.

    Failures become manifest entries rather than exceptions. A record whose
    PDF is already on disk is reported as ``skipped_existing``; pass the
    prior manifest as ``previous`` to keep its original source URL.
    The returned list is sorted by key.
    """
    policy = policy or HarvestPolicy()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    own_session = session is None
    session = session or _make_session(policy, proxies)
    gate = _HostGate(policy.per_host_rate)
    prior = {e.key: e.source_url for e in previous if e.status in (OK, SKIPPED_EXISTING)}
    try:
        with ThreadPoolExecutor(max_workers=max(1, policy.max_concurrency)) as pool:
            futures = [pool.submit(_harvest_one, r, out, session, policy, gate, prior) for r in records]
            entries = [entry for fut in futures for entry in fut.result()]
    finally:
        if own_session:
            session.close()
    entries.sort(key=lambda e: e.key)
    return entries


def write_manifest(entries: Iterable[HarvestManifestEntry], path: os.PathLike | str) -> None:
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(entry.to_json() + "\n")
    os.replace(tmp, path)


def read_manifest(path: os.PathLike | str) -> list[HarvestManifestEntry]:
    with open(path, encoding="utf-8") as fh:
        return [HarvestManifestEntry(**json.loads(line)) for line in fh if line.strip()]
