"""In-process HTTP mocks for hermetic runs.

* MockExtractionService speaks the subset of the PDF->TEI service API the
  client uses and replays fixture TEI documents keyed by the SHA-256 of
  the uploaded PDF.
* MockWebServer serves PDFs (or anything else) from a route table and
  records per-host concurrency, for harvester tests.
* RecordingProxy is a plain HTTP forward proxy that logs every target it
  is asked to reach.
"""

from __future__ import annotations

import hashlib
import http.client
import threading
import time
from collections import Counter
from dataclasses import dataclass
from email.parser import BytesParser
from email.policy import HTTP
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import urlsplit

from .extraction import ALIVE_ROUTE, FULLTEXT_ROUTE


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def owner(self):
        return self.server.owner

    def log_message(self, format, *args):  # noqa: A002
        pass

    def _body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _reply(self, status: int, body: bytes = b"", content_type: str = "text/plain", headers=None):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        for name, value in (headers or {}).items():
            self.send_header(name, value)
        self.end_headers()
        if self.command != "HEAD":
            self.wfile.write(body)


class MockServer:
    handler_class = _Handler

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.host = host
        self._port = port
        self._httpd: Optional[ThreadingHTTPServer] = None
        self._thread: Optional[threading.Thread] = None
        self.lock = threading.Lock()

    @property
    def port(self) -> int:
        return self._httpd.server_address[1] if self._httpd else self._port

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> "MockServer":
        self._httpd = ThreadingHTTPServer((self.host, self._port), self.handler_class)
        self._httpd.daemon_threads = True
        self._httpd.owner = self
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._httpd is not None:
            self._port = self.port  # keep the url valid; a restart rebinds the same port
            self._httpd.shutdown()
            self._httpd.server_close()
            self._thread.join(timeout=5)
            self._httpd = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


# --- extraction service ------------------------------------------------------

def pdf_checksum(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _multipart_fields(content_type: str, body: bytes) -> dict[str, bytes]:
    msg = BytesParser(policy=HTTP).parsebytes(
        f"Content-Type: {content_type}\r\nMIME-Version: 1.0\r\n\r\n".encode("latin-1") + body
    )
    fields = {}
    for part in msg.iter_parts():
        name = part.get_param("name", header="content-disposition")
        if name:
            fields[name] = part.get_payload(decode=True) or b""
    return fields


class _ExtractionHandler(_Handler):
    def do_GET(self):
        if self.path.split("?")[0] == ALIVE_ROUTE:
            self._reply(200, b"true")
        else:
            self._reply(404, b"not found")

    def do_POST(self):
        body = self._body()
        if self.path.split("?")[0] != FULLTEXT_ROUTE:
            self._reply(404, b"not found")
            return
        fields = _multipart_fields(self.headers.get("Content-Type", ""), body)
        pdf = fields.get("input")
        if pdf is None:
            self._reply(400, b"missing input")
            return
        status, payload = self.owner._respond(pdf, fields)
        if status == 200:
            self._reply(200, payload, "application/xml; charset=UTF-8")
        else:
            self._reply(status, payload)


class MockExtractionService(MockServer):
    """Replays TEI fixtures; ``failures`` maps checksum -> leading 500s."""

    handler_class = _ExtractionHandler

    def __init__(
        self,
        fixtures: dict[str, str],
        *,
        failures: Optional[dict[str, int]] = None,
        default_failures: int = 0,
        delay: float = 0.0,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        super().__init__(host, port)
        self.fixtures = dict(fixtures)
        self.failures = dict(failures or {})
        self.default_failures = default_failures
        self.delay = delay
        self.attempts: Counter = Counter()
        self.requests: list[dict] = []

    @classmethod
    def from_pdfs(cls, pairs: dict[bytes, str], **kwargs) -> "MockExtractionService":
        return cls({pdf_checksum(pdf): tei for pdf, tei in pairs.items()}, **kwargs)

    def _respond(self, pdf: bytes, fields: dict[str, bytes]) -> tuple[int, bytes]:
        checksum = pdf_checksum(pdf)
        consolidate = fields.get("consolidateCitations")
        with self.lock:
            self.attempts[checksum] += 1
            attempt = self.attempts[checksum]
            budget = self.failures.get(checksum, self.default_failures)
            if attempt <= budget:
                status = 500
            elif checksum in self.fixtures:
                status = 200
            else:
                status = 400
            self.requests.append(
                {
                    "checksum": checksum,
                    "consolidate_citations": None if consolidate is None else consolidate.decode() == "1",
                    "raw_citations": fields.get("includeRawCitations", b"").decode() == "1",
                    "status": status,
                }
            )
        if self.delay:
            time.sleep(self.delay)
        if status == 200:
            return 200, self.fixtures[checksum].encode("utf-8")
        if status == 500:
            return 500, b"[GENERAL] injected failure"
        return 400, b"[BAD_INPUT_DATA] unknown PDF"


# --- generic web server ------------------------------------------------------

@dataclass
class Route:
    body: bytes = b""
    status: int = 200
    content_type: str = "application/pdf"
    fail_times: int = 0
    fail_status: int = 503
    delay: float = 0.0
    location: Optional[str] = None


class _WebHandler(_Handler):
    def do_HEAD(self):
        self.do_GET()

    def do_GET(self):
        owner = self.owner
        host = self.headers.get("Host", "")
        path = self.path.split("?")[0]
        with owner.lock:
            owner.attempts[path] += 1
            attempt = owner.attempts[path]
            owner.in_flight[host] += 1
            owner.max_in_flight[host] = max(owner.max_in_flight[host], owner.in_flight[host])
            owner.hosts_seen.add(host)
        try:
            route = owner.routes.get(path)
            if route is None:
                self._reply(404, b"not found", "text/html")
                return
            if route.delay:
                time.sleep(route.delay)
            if attempt <= route.fail_times:
                self._reply(route.fail_status, b"try later", "text/html")
            elif route.location is not None:
                self._reply(route.status, b"", "text/html", {"Location": route.location})
            else:
                self._reply(route.status, route.body, route.content_type)
        finally:
            with owner.lock:
                owner.in_flight[host] -= 1


class MockWebServer(MockServer):
    handler_class = _WebHandler

    def __init__(self, routes: Optional[dict[str, Route]] = None, host: str = "127.0.0.1", port: int = 0):
        super().__init__(host, port)
        self.routes = dict(routes or {})
        self.attempts: Counter = Counter()
        self.in_flight: Counter = Counter()
        self.max_in_flight: Counter = Counter()
        self.hosts_seen: set[str] = set()


# --- recording proxy ---------------------------------------------------------

_HOP_HEADERS = {"connection", "keep-alive", "proxy-connection", "proxy-authorization", "transfer-encoding", "te", "upgrade"}


class _ProxyHandler(_Handler):
    def _forward(self):
        target = urlsplit(self.path)
        body = self._body()
        with self.owner.lock:
            self.owner.targets.append(self.path)
            self.owner.hosts[target.netloc] += 1
        if target.scheme != "http" or not target.netloc:
            self._reply(501, b"only absolute http URLs are proxied")
            return
        path = target.path or "/"
        if target.query:
            path += "?" + target.query
        headers = {k: v for k, v in self.headers.items() if k.lower() not in _HOP_HEADERS}
        conn = http.client.HTTPConnection(target.netloc, timeout=30)
        try:
            conn.request(self.command, path, body=body or None, headers=headers)
            resp = conn.getresponse()
            payload = resp.read()
        except OSError as exc:
            self._reply(502, str(exc).encode())
            return
        finally:
            conn.close()
        self.send_response(resp.status)
        for name, value in resp.getheaders():
            if name.lower() not in _HOP_HEADERS and name.lower() != "content-length":
                self.send_header(name, value)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        if self.command != "HEAD":
            self.wfile.write(payload)

    do_GET = do_POST = do_HEAD = _forward


class RecordingProxy(MockServer):
    """Forward proxy; ``hosts`` counts requests per ``host:port`` target."""

    handler_class = _ProxyHandler

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        super().__init__(host, port)
        self.targets: list[str] = []
        self.hosts: Counter = Counter()

    @property
    def proxies(self) -> dict[str, str]:
        return {"http": self.url, "https": self.url}
