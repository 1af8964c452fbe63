"""The bundled fixture corpus: a small DBLP snapshot, TEI replies and goldens.

``materialize`` writes the corpus with its ee links pointed at a mock PDF
host and returns everything needed to stand up the two mock services.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .mock import MockExtractionService, MockWebServer, Route, pdf_checksum
from .tei import safe_key

FIXTURE_DIR = Path(__file__).parent / "fixtures"
GOLDEN_DIR = FIXTURE_DIR / "golden"
PDF_BASE_TOKEN = "@PDF_BASE@"

# name -> (corpus template, citing keys whose PDFs the mock host serves)
_CORPORA = {
    "corpus": (
        "corpus.xml.in",
        (
            "conf/ecsa/GasperisPF21",
            "conf/fixture/AdamsB21",
            "conf/fixture/BakerC22",
            "conf/fixture/CruzD22",
            "conf/fixture/DiazE20",
            "conf/fixture/EvansF19",
            "conf/fixture/GarciaH20",
            "conf/fixture/HillI21",
            "conf/fixture/IvanovJ22",
            # never selected; served so a stray download would be visible
            "conf/fixture/JonesK21",
            "conf/fixture/KimL20",
            "journals/fixture/LeeM21",
        ),
    ),
    "single": ("single.xml.in", ("conf/ecsa/GasperisPF21",)),
}

# extraction attempts answered with HTTP 500 before the TEI is returned
_EXTRACTION_FAILURES = {"conf/fixture/GarciaH20": 2}


def fixture_pdf(key: str) -> bytes:
    """Tiny stand-in PDF, unique per key."""
    return b"%PDF-1.4\n% nodoirefs fixture\n% " + key.encode("utf-8") + b"\n%%EOF\n"


def tei_path(key: str) -> Path:
    return FIXTURE_DIR / "tei" / f"{safe_key(key)}.tei.xml"


@dataclass
class Fixture:
    name: str
    corpus_path: Path
    routes: dict[str, Route] = field(default_factory=dict)
    tei_by_checksum: dict[str, str] = field(default_factory=dict)
    failures: dict[str, int] = field(default_factory=dict)

    @property
    def golden_dataset(self) -> Path:
        return GOLDEN_DIR / ("dataset.jsonl" if self.name == "corpus" else "single.jsonl")

    @property
    def golden_stats(self) -> Path:
        return GOLDEN_DIR / ("stats.json" if self.name == "corpus" else "single_stats.json")

    def pdf_host(self, **kwargs) -> MockWebServer:
        return MockWebServer(self.routes, **kwargs)

    def extraction_service(self, *, with_failures: bool = True, **kwargs) -> MockExtractionService:
        failures = self.failures if with_failures else {}
        return MockExtractionService(self.tei_by_checksum, failures=failures, **kwargs)


def materialize(dest: Path | str, pdf_base_url: str, name: str = "corpus") -> Fixture:
    template, keys = _CORPORA[name]
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    text = (FIXTURE_DIR / template).read_text(encoding="latin-1")
    corpus_path = dest / f"{name}.xml"
    corpus_path.write_text(text.replace(PDF_BASE_TOKEN, pdf_base_url.rstrip("/")), encoding="latin-1")

    fixture = Fixture(name=name, corpus_path=corpus_path)
    for key in keys:
        short = key.rsplit("/", 1)[-1]
        pdf = fixture_pdf(key)
        fixture.routes[f"/pdf/{short}.pdf"] = Route(pdf)
        tei = tei_path(key)
        if tei.exists():
            fixture.tei_by_checksum[pdf_checksum(pdf)] = tei.read_text(encoding="utf-8")
        if key in _EXTRACTION_FAILURES:
            fixture.failures[pdf_checksum(pdf)] = _EXTRACTION_FAILURES[key]
    if name == "corpus":
        fixture.routes["/landing/FoxG21.html"] = Route(
            b"<!DOCTYPE html><html><body>Download the paper here</body></html>", content_type="text/html"
        )
    return fixture
