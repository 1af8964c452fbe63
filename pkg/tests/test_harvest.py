from __future__ import annotations

from pathlib import Path

import pytest

from nodoirefs.corpus import DblpRecord, EeLink
from nodoirefs.harvest import (
    HTTP_ERROR,
    NOT_PDF,
    OK,
    SKIPPED_EXISTING,
    TIMEOUT,
    HarvestPolicy,
    backoff_delay,
    harvest,
    is_pdf_file,
    pdf_filename,
    read_manifest,
    write_manifest,
)
from nodoirefs.mock import MockWebServer, Route

PDF = b"%PDF-1.7\nbody\n%%EOF\n"
FAST = HarvestPolicy(retries=3, timeout=5, backoff=0.01, max_backoff=0.05)


def rec(key: str, *urls: str) -> DblpRecord:
    return DblpRecord(key, "inproceedings", title=key, ee_links=tuple(EeLink(u, "open") for u in urls))


def test_valid_pdf(tmp_path):
    with MockWebServer({"/a.pdf": Route(PDF)}) as web:
        (entry,) = harvest([rec("conf/x/A", f"{web.url}/a.pdf")], tmp_path, FAST)
    assert entry.status == OK and entry.bytes == len(PDF)
    assert Path(entry.local_path).name == pdf_filename("conf/x/A") == "conf__x__A.pdf"
    assert is_pdf_file(entry.local_path)


def test_landing_page_is_not_pdf(tmp_path):
    with MockWebServer({"/a.html": Route(b"<html>hi</html>", content_type="text/html")}) as web:
        (entry,) = harvest([rec("conf/x/A", f"{web.url}/a.html")], tmp_path, FAST)
    assert entry.status == NOT_PDF and entry.bytes == 0
    assert not any(tmp_path.iterdir())


def test_fails_twice_then_succeeds(tmp_path):
    with MockWebServer({"/f.pdf": Route(PDF, fail_times=2)}) as web:
        (entry,) = harvest([rec("conf/x/F", f"{web.url}/f.pdf")], tmp_path, FAST)
        assert web.attempts["/f.pdf"] == 3
    assert entry.status == OK


def test_retries_exhausted(tmp_path):
    policy = HarvestPolicy(retries=1, backoff=0.01)
    with MockWebServer({"/f.pdf": Route(PDF, fail_times=5)}) as web:
        (entry,) = harvest([rec("conf/x/F", f"{web.url}/f.pdf")], tmp_path, policy)
        assert web.attempts["/f.pdf"] == 2
    assert entry.status == HTTP_ERROR


def test_client_error_not_retried(tmp_path):
    with MockWebServer({}) as web:
        (entry,) = harvest([rec("conf/x/G", f"{web.url}/gone.pdf")], tmp_path, FAST)
        assert web.attempts["/gone.pdf"] == 1
    assert entry.status == HTTP_ERROR


def test_timeout(tmp_path):
    policy = HarvestPolicy(retries=1, timeout=0.2, backoff=0.01)
    with MockWebServer({"/slow.pdf": Route(PDF, delay=1.0)}) as web:
        (entry,) = harvest([rec("conf/x/S", f"{web.url}/slow.pdf")], tmp_path, policy)
    assert entry.status == TIMEOUT


def test_falls_through_to_next_link(tmp_path):
    with MockWebServer({"/b.pdf": Route(PDF)}) as web:
        entries = harvest([rec("conf/x/A", f"{web.url}/a.pdf", f"{web.url}/b.pdf")], tmp_path, FAST)
    assert [(e.source_url.rsplit("/", 1)[1], e.status) for e in entries] == [("a.pdf", HTTP_ERROR), ("b.pdf", OK)]


def test_only_open_links_are_tried(tmp_path):
    record = DblpRecord("conf/x/C", "inproceedings", ee_links=(EeLink("http://127.0.0.1:9/x.pdf", "unknown"),))
    assert harvest([record], tmp_path, FAST) == []


def test_redirect_cap(tmp_path):
    routes = {f"/r{i}": Route(status=302, location=f"/r{i + 1}") for i in range(10)}
    routes["/r10"] = Route(PDF)
    with MockWebServer(routes) as web:
        capped = harvest([rec("conf/x/R", f"{web.url}/r0")], tmp_path / "a", HarvestPolicy(max_redirects=3, backoff=0.01))
        allowed = harvest([rec("conf/x/R", f"{web.url}/r5")], tmp_path / "b", HarvestPolicy(max_redirects=5, backoff=0.01))
    assert capped[0].status == HTTP_ERROR
    assert allowed[0].status == OK


def test_idempotent_rerun(tmp_path):
    with MockWebServer({"/a.pdf": Route(PDF), "/b.pdf": Route(PDF)}) as web:
        records = [rec("conf/x/A", f"{web.url}/a.pdf"), rec("conf/x/B", f"{web.url}/b.pdf")]
        first = harvest(records, tmp_path, FAST)
        write_manifest(first, tmp_path / "m.jsonl")
        second = harvest(records, tmp_path, FAST, previous=read_manifest(tmp_path / "m.jsonl"))
        assert web.attempts["/a.pdf"] == 1
    assert [e.status for e in second] == [SKIPPED_EXISTING] * 2
    strip = lambda e: (e.key, e.source_url, e.local_path, e.bytes, e.fetched_at)  # noqa: E731
    assert [strip(e) for e in first] == [strip(e) for e in second]


def test_per_host_concurrency_bound(tmp_path):
    routes = {f"/p{i}.pdf": Route(PDF, delay=0.05) for i in range(16)}
    policy = HarvestPolicy(max_concurrency=8, per_host_rate=2, backoff=0.01)
    with MockWebServer(routes) as web:
        records = [rec(f"conf/x/P{i}", f"{web.url}/p{i}.pdf") for i in range(16)]
        entries = harvest(records, tmp_path, policy)
        peak = max(web.max_in_flight.values())
    assert all(e.status == OK for e in entries)
    assert 1 <= peak <= 2


def test_manifest_round_trip(tmp_path):
    with MockWebServer({"/a.pdf": Route(PDF)}) as web:
        entries = harvest([rec("conf/x/A", f"{web.url}/a.pdf")], tmp_path, FAST)
    write_manifest(entries, tmp_path / "m.jsonl")
    assert read_manifest(tmp_path / "m.jsonl") == entries


@pytest.mark.parametrize("attempt", range(6))
def test_backoff_bounds(attempt):
    for _ in range(50):
        d = backoff_delay(attempt, 0.5, 4.0)
        assert min(4.0, 0.5 * 2**attempt) <= d <= min(4.0, 0.5 * 2**attempt) + 0.5
