from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodoirefs.corpus import DblpRecord, EeLink
from nodoirefs.store import MetadataStore, StoreError

from support import BruteForce, random_store_records

ALBUSAC = DblpRecord(
    key="journals/sigpro/AlbusacCLVL09",
    pub_type="article",
    title="A supervised learning approach to automate the acquisition of knowledge in surveillance systems.",
    year=2009,
    ee_links=(EeLink("https://doi.org/10.1016/j.sigpro.2009.04.008"),),
    doi="10.1016/j.sigpro.2009.04.008",
)
ELHOSENY = DblpRecord(
    key="journals/cssp/Elhoseny20",
    pub_type="article",
    title="Multi-Object Detection and Tracking (MODT) Machine Learning Model for Real-Time Video Surveillance Systems.",
    year=2020,
)
GASPERIS = DblpRecord(key="conf/ecsa/GasperisPF21", pub_type="inproceedings", title="Citing paper.", year=2021)


@pytest.fixture
def store(tmp_path):
    with MetadataStore(tmp_path / "m.sqlite") as s:
        s.upsert_many([ALBUSAC, ELHOSENY, GASPERIS])
        yield s


def test_read_your_write(store):
    assert store.get_by_key("conf/ecsa/GasperisPF21") == GASPERIS
    assert store.get_by_key("nope") is None
    assert store.get_by_key("CONF/ECSA/GASPERISPF21") is None


def test_get_by_doi(store):
    assert store.get_by_doi("10.1016/j.sigpro.2009.04.008") == [ALBUSAC]
    assert store.get_by_doi("HTTPS://DOI.ORG/10.1016/J.SIGPRO.2009.04.008") == [ALBUSAC]
    assert store.get_by_doi("10.1/absent") == []
    assert store.get_by_doi("") == []


def test_get_by_title(store):
    query = "multi-object detection and tracking (modt) machine learning model for real-time video surveillance systems"
    assert store.get_by_title(query) == [ELHOSENY]
    assert store.get_by_title("multi object  detection and tracking modt machine learning model for real time video surveillance systems") == [ELHOSENY]
    assert store.get_by_title("Not in store") == []
    assert store.get_by_title("...") == []


def test_title_collisions_return_all(store):
    twin = DblpRecord("conf/x/Twin", "inproceedings", title="MULTI-OBJECT detection and tracking (MODT) machine learning model for real-time video surveillance systems")
    store.upsert(twin)
    assert sorted(r.key for r in store.get_by_title(ELHOSENY.title)) == sorted([ELHOSENY.key, twin.key])


def test_reupsert_moves_index_entries(store):
    renamed = DblpRecord(ALBUSAC.key, "article", title="Renamed.", year=2009)
    store.upsert(renamed)
    assert store.get_by_title(ALBUSAC.title) == []
    assert store.get_by_doi(ALBUSAC.doi) == []
    assert store.get_by_title("renamed") == [renamed]
    assert store.record_count == 3


def test_stats(store):
    stats = store.stats()
    assert stats["record_count"] == 3
    assert stats["index_sizes"] == {"by_key": 3, "by_doi": 1, "by_norm_title": 3}


def test_reopen_is_durable(tmp_path):
    path = tmp_path / "d.sqlite"
    records = random_store_records(random.Random(3), 200)
    with MetadataStore(path) as s:
        s.upsert_many(records)
        before = (s.record_count, [s.get_by_title(r.title) for r in records], [s.get_by_doi(r.doi or "") for r in records])
    with MetadataStore(path, read_only=True) as s:
        after = (s.record_count, [s.get_by_title(r.title) for r in records], [s.get_by_doi(r.doi or "") for r in records])
    assert before == after


def test_read_only_rejects_writes(tmp_path):
    path = tmp_path / "ro.sqlite"
    MetadataStore(path).close()
    with MetadataStore(path, read_only=True) as s:
        with pytest.raises(Exception):
            s.upsert(GASPERIS)


def test_schema_version_mismatch(tmp_path):
    import sqlite3

    path = tmp_path / "v.sqlite"
    MetadataStore(path).close()
    con = sqlite3.connect(path)
    con.execute("UPDATE meta SET value = '99' WHERE name = 'schema_version'")
    con.commit()
    con.close()
    with pytest.raises(StoreError):
        MetadataStore(path)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=0, max_value=150))
def test_lookups_equal_linear_scan(tmp_path_factory, seed, n):
    rng = random.Random(seed)
    records = random_store_records(rng, n)
    scan = BruteForce(records)
    with MetadataStore(tmp_path_factory.mktemp("s") / "x.sqlite") as s:
        s.upsert_many(records)
        assert s.record_count == len(scan.rows)
        for r in records:
            assert sorted(x.key for x in s.get_by_title(r.title)) == sorted(x.key for x in scan.by_title(r.title))
            if r.doi:
                q = r.doi.upper()
                assert sorted(x.key for x in s.get_by_doi(q)) == sorted(x.key for x in scan.by_doi(q))
            assert s.get_by_key(r.key) == next(x for x, _, _ in scan.rows if x.key == r.key)
