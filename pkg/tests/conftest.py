from __future__ import annotations

import pytest

import nodoirefs.matcher as matcher_mod
import nodoirefs.pipeline as pipeline_mod

_PROXY_VARS = ("http_proxy", "https_proxy", "all_proxy", "no_proxy", "HTTP_PROXY", "HTTPS_PROXY", "ALL_PROXY", "NO_PROXY")

# Every CitationRecord built anywhere in the suite is checked for the output
# validity rule; any violation fails the session.
AUDIT = {"records": 0, "elements": 0, "violations": []}
# PASS/FAIL lines from tests/test_acceptance.py, echoed in the terminal summary
ACCEPTANCE: list[str] = []


@pytest.fixture(autouse=True)
def _no_ambient_proxy(monkeypatch):
    for name in _PROXY_VARS:
        monkeypatch.delenv(name, raising=False)


_original_build = matcher_mod.build_citation_record


def _audited_build(citing_key, results):
    record = _original_build(citing_key, results)
    if record is not None:
        AUDIT["records"] += 1
        AUDIT["elements"] += len(record.cited_papers)
        AUDIT["violations"] += record.violations()
    return record


# patched at import so test modules that import the name directly see it too
matcher_mod.build_citation_record = _audited_build
pipeline_mod.build_citation_record = _audited_build


@pytest.fixture
def expect_violations():
    """For tests that corrupt data on purpose: their violations must appear, then are discarded."""
    before = len(AUDIT["violations"])
    yield
    assert len(AUDIT["violations"]) > before, "expected the corrupted input to be flagged"
    del AUDIT["violations"][before:]


def pytest_sessionfinish(session, exitstatus):
    if AUDIT["violations"]:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
    status = "FAIL" if AUDIT["violations"] else "PASS"
    terminalreporter.write_line(
        f"[{status}] output validity audit: {AUDIT['elements']} cited_papers elements in "
        f"{AUDIT['records']} records, {len(AUDIT['violations'])} violations"
    )
    for v in AUDIT["violations"][:20]:
        terminalreporter.write_line(f"    {v}")
