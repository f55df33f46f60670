from __future__ import annotations

import datetime as dt
import json
import shutil

import pytest

from conftest import CLUSTER4, FIXTURES, MANIFEST
from pulsechain import corpus
from pulsechain.corpus import CitationEdge, SectionKind, Split
from pulsechain.errors import ManifestSchema, MissingDocument, NotFound, OfflineUnavailable


def _write_manifest(tmp_path, clusters):
    (tmp_path / "docs").mkdir(exist_ok=True)
    for c in clusters:
        for d in c["docs"]:
            src = CLUSTER4 / "docs" / f"{d['id']}.md"
            dst = tmp_path / d["path"]
            if src.exists() and not dst.exists():
                shutil.copyfile(src, dst)
    path = tmp_path / "corpus.json"
    path.write_text(json.dumps({"clusters": clusters}), encoding="utf-8")
    return path


def _doc(doc_id, date="2020-01-01", title=None):
    return {"id": doc_id, "path": f"docs/{doc_id}.md", "title": title or doc_id, "published_at": date}


def test_load_fixture_manifest(fixture_corpus):
    assert set(fixture_corpus.clusters) == {"vision-backbones", "solo"}
    backbones = fixture_corpus.clusters["vision-backbones"]
    assert backbones.split is Split.TRAIN
    assert backbones.doc_ids == ["stacknet", "gatedconv", "patchmixer", "lightvit"]
    doc = fixture_corpus.documents["gatedconv"]
    assert doc.published_at == dt.date(2020, 6, 2)
    assert doc.venue == "NeurIPS"
    assert doc.section(SectionKind.ABSTRACT).body.strip().startswith("Convolutional backbones")
    assert [r.index for r in doc.references] == [1, 2, 3, 7]


def test_stats_two_clusters(fixture_corpus):
    stats = fixture_corpus.stats()
    assert stats["train"] == {"clusters": 1, "min_papers": 4, "max_papers": 4, "avg_papers": 4.0}
    assert stats["test"] == {"clusters": 1, "min_papers": 1, "max_papers": 1, "avg_papers": 1.0}
    assert stats["total"]["clusters"] == 2
    assert stats["total"]["documents"] == 5


def test_stats_rounding(tmp_path):
    # three clusters of sizes 1, 1, 2: mean 4/3 -> 1.33
    clusters = [
        {"id": "a", "split": "train", "docs": [_doc("stacknet")]},
        {"id": "b", "split": "train", "docs": [_doc("gatedconv")]},
        {"id": "c", "split": "train", "docs": [_doc("lightvit"), _doc("patchmixer")]},
    ]
    stats = corpus.load_manifest(_write_manifest(tmp_path, clusters)).stats()
    assert stats["train"]["avg_papers"] == 1.33
    assert stats["test"]["clusters"] == 0


def test_missing_document(tmp_path):
    clusters = [{"id": "a", "split": "train", "docs": [_doc("stacknet"), _doc("ghost")]}]
    with pytest.raises(MissingDocument, match="ghost"):
        corpus.load_manifest(_write_manifest(tmp_path, clusters))


def test_missing_manifest(tmp_path):
    with pytest.raises(MissingDocument):
        corpus.load_manifest(tmp_path / "nope.json")


@pytest.mark.parametrize("mutate", [
    lambda c: c[0].pop("split"),
    lambda c: c[0].update(split="validation"),
    lambda c: c[0]["docs"][0].pop("published_at"),
    lambda c: c[0].update(docs=[]),
    lambda c: c[0]["docs"][0].update(published_at="1850-01-01"),
    lambda c: c[0]["docs"][0].update(published_at="2020-13-01"),
    lambda c: c.append(dict(c[0])),
    lambda c: c[0]["docs"].append(dict(c[0]["docs"][0])),
])
def test_manifest_schema_errors(tmp_path, mutate):
    clusters = [{"id": "a", "split": "train", "docs": [_doc("stacknet")]}]
    mutate(clusters)
    with pytest.raises(ManifestSchema):
        corpus.load_manifest(_write_manifest(tmp_path, clusters))


def test_invalid_json(tmp_path):
    p = tmp_path / "corpus.json"
    p.write_text("{not json", encoding="utf-8")
    with pytest.raises(ManifestSchema):
        corpus.load_manifest(p)


def test_parallel_load_matches_serial():
    a = corpus.load_manifest(MANIFEST)
    b = corpus.load_manifest(MANIFEST, parallelism=4)
    assert a.documents == b.documents
    assert a.clusters == b.clusters


def test_load_is_idempotent():
    assert corpus.load_manifest(MANIFEST) == corpus.load_manifest(MANIFEST)


@pytest.mark.parametrize("value,expected", [
    ("2021-02-20", dt.date(2021, 2, 20)),
    ("2021-02", dt.date(2021, 2, 1)),
    ("1999", dt.date(1999, 1, 1)),
])
def test_parse_date(value, expected):
    assert corpus.parse_date(value) == expected


@pytest.mark.parametrize("value", ["", "20-01-01", "2021-02-30", "1899-12-31", "2100-01-01", "soon"])
def test_parse_date_rejects(value):
    with pytest.raises(ManifestSchema):
        corpus.parse_date(value)


def test_citation_graph_fixture(fixture_corpus):
    edges = corpus.build_citation_graph(fixture_corpus)
    assert edges == [
        CitationEdge("gatedconv", "stacknet", 7),
        CitationEdge("lightvit", "gatedconv", 9),
        CitationEdge("patchmixer", "stacknet", 11),
        CitationEdge("sparsequant", "lightvit", 3),
    ]
    # referential integrity
    for e in edges:
        assert e.from_doc in fixture_corpus.documents and e.to_doc in fixture_corpus.documents
        assert e.via_reference in {r.index for r in fixture_corpus.documents[e.from_doc].references}
    assert fixture_corpus.documents["lightvit"].references[1].matched_doc == "gatedconv"


def test_citation_graph_wrapped_title_and_case(fixture_corpus):
    # lightvit's entry [9] wraps the cited title over two lines;
    # patchmixer's entry [11] lowercases it
    ref9 = next(r for r in fixture_corpus.documents["lightvit"].references if r.index == 9)
    assert "Efficient Image Classification" in ref9.raw
    assert CitationEdge("patchmixer", "stacknet", 11) in corpus.build_citation_graph(fixture_corpus)


def test_citation_graph_order_invariant(tmp_path):
    docs = [_doc(d, t) for d, t in [
        ("stacknet", "2019-03-11"), ("gatedconv", "2020-06-02"), ("lightvit", "2021-02-20"),
    ]]
    titles = json.loads(MANIFEST.read_text())["clusters"][0]["docs"]
    by_id = {d["id"]: d["title"] for d in titles}
    for d in docs:
        d["title"] = by_id[d["id"]]
    a = corpus.load_manifest(_write_manifest(tmp_path, [{"id": "x", "split": "train", "docs": docs}]))
    b_dir = tmp_path / "b"
    b_dir.mkdir()
    b = corpus.load_manifest(_write_manifest(b_dir, [{"id": "x", "split": "train", "docs": docs[::-1]}]))
    assert corpus.build_citation_graph(a) == corpus.build_citation_graph(b)


def test_no_self_citation(tmp_path):
    text = "# Self\n\n## Abstract\n\nx\n\n## References\n\n[1] Me. A Study Of Myself. 2020.\n"
    (tmp_path / "docs").mkdir()
    (tmp_path / "docs" / "self.md").write_text(text, encoding="utf-8")
    path = _write_manifest(tmp_path, [{"id": "c", "split": "train", "docs": [
        _doc("self", title="A Study of Myself"),
    ]}])
    assert corpus.build_citation_graph(corpus.load_manifest(path)) == []


@pytest.mark.parametrize("raw,year", [
    ("K. He et al. Deep residual learning. CVPR, 2016.", 2016),
    ("A. B. Title. arXiv:2103.14030, 2021.", 2021),
    ("Smith (1998). Old work. Journal 12, pp. 100-120.", 1998),
    ("No year here at all.", None),
    ("Published 1850 and reprinted 2150.", None),
    ("Report 12345 of 2003, revised 2005", 2005),
])
def test_resolve_reference_year(raw, year):
    assert corpus.resolve_reference_year(raw) == year


def test_normalize_title():
    assert corpus.normalize_title("  StackNet: Deep—Stacked\tBlocks!! ") == "stacknet deep stacked blocks"
    # composed and decomposed forms agree
    assert corpus.normalize_title("Caf\u00e9 Nets") == corpus.normalize_title("Cafe\u0301 Nets")


def test_fetch_metadata_fixture_dir():
    rec = corpus.fetch_metadata("fix-0001", FIXTURES / "metadata")
    assert rec.paper_id == "fix-0001"
    assert rec.title == "Gated Convolutions for Efficient Image Classification"
    assert rec.date == "2020-06-02"
    assert rec.venue == "NeurIPS"


def test_fetch_metadata_unknown_id():
    with pytest.raises(NotFound):
        corpus.fetch_metadata("fix-9999", FIXTURES / "metadata")


def test_fetch_metadata_offline_without_fixture(tmp_path):
    with pytest.raises(OfflineUnavailable):
        corpus.fetch_metadata("fix-0001", tmp_path / "absent")
    with pytest.raises(OfflineUnavailable):
        corpus.fetch_metadata("fix-0001", "http://127.0.0.1:9", offline=True)


def test_fetch_metadata_http():
    from stub_service import StubService

    with StubService() as stub:
        stub.state.metadata["abc"] = {"title": "T", "date": "2021-01-01", "venue": None}
        rec = corpus.fetch_metadata("abc", stub.url + "/meta")
        assert (rec.title, rec.date, rec.venue) == ("T", "2021-01-01", None)
        with pytest.raises(NotFound):
            corpus.fetch_metadata("missing", stub.url + "/meta")
