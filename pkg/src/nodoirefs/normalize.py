"""Normalizers shared by the corpus parser, the store and the matcher."""

from __future__ import annotations

import re
import unicodedata
from typing import Optional

_RESOLVER_PREFIX = re.compile(r"^(?:https?://)?(?:www\.)?(?:dx\.)?doi\.org/", re.IGNORECASE)
_DOI_SCHEME = re.compile(r"^doi:\s*", re.IGNORECASE)
_TRAILING_PUNCT = ".,;:!?"
_DOI_TOKEN = re.compile(r"10\.\d{4,9}/[^\s\"'<>,]+", re.IGNORECASE)
_NON_WORD = re.compile(r"[\W_]+")

_MAX_PASSES = 8


def _doi_pass(s: str, fold: bool = True) -> str:
    s = s.strip()
    if fold:
        s = s.casefold()
    s = _RESOLVER_PREFIX.sub("", s)
    s = _DOI_SCHEME.sub("", s)
    s = _RESOLVER_PREFIX.sub("", s)
    return s.rstrip(_TRAILING_PUNCT).strip()


def normalize_doi(s: str) -> str:
    """Canonical DOI form: case-folded, no resolver URL, no ``doi:`` scheme,
    no trailing sentence punctuation.

    >>> normalize_doi("https://doi.org/10.1016/j.sigpro.2009.04.008")
    '10.1016/j.sigpro.2009.04.008'
    >>> normalize_doi("10.17487/RFC3411.")
    '10.17487/rfc3411'
    """
    # iterate to a fixed point so the function is idempotent by construction
    for _ in range(_MAX_PASSES):
        out = _doi_pass(s)
        if out == s:
            break
        s = out
    return s


def tidy_doi(s: str) -> str:
    """Like normalize_doi but keeps the original letter case, for display."""
    for _ in range(_MAX_PASSES):
        out = _doi_pass(s, fold=False)
        if out == s:
            break
        s = out
    return s


def _title_pass(s: str) -> str:
    s = unicodedata.normalize("NFKD", s)
    s = "".join(c for c in s if unicodedata.category(c) != "Mn")
    s = s.casefold()
    s = _NON_WORD.sub(" ", s)
    return " ".join(s.split())


def normalize_title(s: str) -> str:
    """Title key used for exact matching.

    Strips diacritics, case-folds, turns punctuation into spaces and
    collapses whitespace, so ``"Systèmes répartis"`` and
    ``"SYSTEMES  repartis."`` share the key ``"systemes repartis"``.
    """
    for _ in range(_MAX_PASSES):
        out = _title_pass(s)
        if out == s:
            break
        s = out
    return s


def is_doi_resolver_url(url: str) -> bool:
    return bool(_RESOLVER_PREFIX.match(url.strip()))


def doi_from_url(url: str) -> Optional[str]:
    """Return the normalized DOI behind a doi.org resolver link, if any."""
    if not is_doi_resolver_url(url):
        return None
    doi = normalize_doi(url)
    return doi if doi.startswith("10.") else None


def find_doi_token(raw_text: str) -> Optional[str]:
    """First DOI-shaped token in free text, prefix/punctuation stripped, case kept."""
    m = _DOI_TOKEN.search(raw_text)
    if m is None:
        return None
    return tidy_doi(m.group(0))


def extract_doi_from_raw(raw_text: str) -> Optional[str]:
    """First DOI-shaped token in a free-text reference, normalized."""
    token = find_doi_token(raw_text)
    return normalize_doi(token) if token else None
