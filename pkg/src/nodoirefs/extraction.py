"""Client for the external PDF -> TEI full-text extraction service.

Only the configured endpoint is ever contacted. Citation consolidation
(resolving parsed references against publisher metadata) happens inside
the service; here it is just a form flag passed along with the upload.
"""

from __future__ import annotations

import logging
import time
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import requests

from .harvest import backoff_delay, is_pdf_file
from .tei import TEI_NS

logger = logging.getLogger(__name__)

ALIVE_ROUTE = "/api/isalive"
FULLTEXT_ROUTE = "/api/processFulltextDocument"

OK = "ok"
SERVICE_ERROR = "service_error"
UNPARSEABLE_PDF = "unparseable_pdf"


class ServiceUnavailable(Exception):
    pass


@dataclass(frozen=True)
class ExtractionRequest:
    key: str
    pdf_path: Path
    consolidate_citations: bool = False

    def __post_init__(self):
        if not is_pdf_file(self.pdf_path):
            raise ValueError(f"{self.key}: {self.pdf_path} is missing or not a PDF")


@dataclass(frozen=True)
class ExtractionResult:
    key: str
    tei_xml: str
    service_status: str
    duration: int  # milliseconds


@dataclass
class ServicePolicy:
    retries: int = 3
    timeout: float = 120.0
    backoff: float = 1.0
    max_backoff: float = 30.0


def _url(endpoint: str, route: str) -> str:
    return endpoint.rstrip("/") + route


def health_check(endpoint: str, timeout: float = 5.0, *, session: Optional[requests.Session] = None) -> bool:
    """True iff the service answers its liveness route in time."""
    getter = session.get if session is not None else requests.get
    try:
        resp = getter(_url(endpoint, ALIVE_ROUTE), timeout=timeout)
    except requests.RequestException:
        return False
    return resp.status_code == 200


def _looks_like_tei(text: str) -> bool:
    try:
        root = ET.fromstring(text)
    except ET.ParseError:
        return False
    return root.find(f".//{{{TEI_NS}}}listBibl") is not None


def submit_pdf(
    endpoint: str,
    request: ExtractionRequest,
    policy: Optional[ServicePolicy] = None,
    *,
    session: Optional[requests.Session] = None,
) -> ExtractionResult:
    policy = policy or ServicePolicy()
    poster = session.post if session is not None else requests.post
    data = {
        "consolidateCitations": "1" if request.consolidate_citations else "0",
        "includeRawCitations": "1",
    }
    pdf = request.pdf_path.read_bytes()
    started = time.monotonic()

    def done(text: str, status: str) -> ExtractionResult:
        return ExtractionResult(request.key, text, status, int((time.monotonic() - started) * 1000))

    for attempt in range(policy.retries + 1):
        if attempt:
            time.sleep(backoff_delay(attempt - 1, policy.backoff, policy.max_backoff))
        try:
            resp = poster(
                _url(endpoint, FULLTEXT_ROUTE),
                files={"input": (request.pdf_path.name, pdf, "application/pdf")},
                data=data,
                timeout=policy.timeout,
            )
        except requests.RequestException as exc:
            logger.info("%s: attempt %d failed: %s", request.key, attempt + 1, exc)
            continue
        if resp.status_code == 200:
            text = resp.content.decode("utf-8")
            if _looks_like_tei(text):
                return done(text, OK)
            logger.warning("%s: service answered 200 without a TEI bibliography", request.key)
            return done("", SERVICE_ERROR)
        if 400 <= resp.status_code < 500:
            return done("", UNPARSEABLE_PDF)
        logger.info("%s: attempt %d got HTTP %d", request.key, attempt + 1, resp.status_code)
    return done("", SERVICE_ERROR)


def extract_batch(
    endpoint: str,
    requests_: Iterable[ExtractionRequest],
    policy: Optional[ServicePolicy] = None,
    *,
    concurrency: int = 4,
    session: Optional[requests.Session] = None,
    proxies: Optional[dict] = None,
) -> list[ExtractionResult]:
    """Submit many PDFs with bounded parallelism; results sorted by key."""
    own = session is None
    if own:
        session = requests.Session()
        if proxies:
            session.proxies.update(proxies)
    try:
        if not health_check(endpoint, session=session):
            raise ServiceUnavailable(f"extraction service at {endpoint} is not answering")
        with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
            results = list(pool.map(lambda r: submit_pdf(endpoint, r, policy, session=session), requests_))
    finally:
        if own:
            session.close()
    return sorted(results, key=lambda r: r.key)
