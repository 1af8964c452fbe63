from __future__ import annotations

from hypothesis import given
from hypothesis import strategies as st

from nodoirefs.normalize import (
    doi_from_url,
    extract_doi_from_raw,
    find_doi_token,
    normalize_doi,
    normalize_title,
    tidy_doi,
)


def test_doi_resolver_prefix_removed():
    assert normalize_doi("https://doi.org/10.1016/j.sigpro.2009.04.008") == "10.1016/j.sigpro.2009.04.008"


def test_doi_trailing_period_and_case():
    assert normalize_doi("10.17487/RFC3411.") == "10.17487/rfc3411"


def test_doi_scheme_and_resolver_combined():
    assert normalize_doi("doi:https://doi.org/10.1016/j.sigpro.2009.04.008,") == "10.1016/j.sigpro.2009.04.008"
    assert normalize_doi("  DOI: http://dx.doi.org/10.1/ABC ") == "10.1/abc"


def test_tidy_doi_keeps_case():
    assert tidy_doi("doi:10.23919/IRS.2019.8768102.") == "10.23919/IRS.2019.8768102"


def test_doi_from_url_rejects_other_hosts():
    assert doi_from_url("https://arxiv.org/abs/1234.5678") is None
    assert doi_from_url("https://doi.org/") is None
    assert doi_from_url("https://www.doi.org/10.1/X") == "10.1/x"


def test_extract_doi_from_raw_examples():
    assert extract_doi_from_raw("An architecture ... 2002. doi:10.17487/RFC3411.") == "10.17487/rfc3411"
    assert extract_doi_from_raw("no identifiers here") is None
    raw = "doi:https://doi.org/10.1016/j.sigpro.2009.04.008, special Section: Visual Information Analysis"
    assert extract_doi_from_raw(raw) == "10.1016/j.sigpro.2009.04.008"
    assert find_doi_token("see 10.23919/IRS.2019.8768102.") == "10.23919/IRS.2019.8768102"


def test_title_examples():
    a = normalize_title("Multi-Object  Detection and Tracking (MODT) Machine")
    b = normalize_title("multi object detection and tracking modt machine")
    assert a == b == "multi object detection and tracking modt machine"
    assert normalize_title("Systèmes répartis") == "systemes repartis"
    assert normalize_title("") == ""
    assert normalize_title("Über effiziente Joins.") == "uber effiziente joins"


@given(st.text())
def test_normalize_doi_idempotent(s):
    once = normalize_doi(s)
    assert normalize_doi(once) == once


@given(st.text())
def test_tidy_doi_idempotent_and_folds_to_normalized(s):
    once = tidy_doi(s)
    assert tidy_doi(once) == once


@given(st.text())
def test_normalize_title_idempotent(s):
    once = normalize_title(s)
    assert normalize_title(once) == once


@given(st.text(alphabet=st.characters(codec="utf-8"), max_size=40))
def test_title_has_no_edge_or_double_spaces(s):
    out = normalize_title(s)
    assert out == out.strip()
    assert "  " not in out
