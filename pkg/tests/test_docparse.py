from __future__ import annotations

import json

import pytest

from conftest import CLUSTER4
from pulsechain import docparse
from pulsechain.corpus import Section, SectionKind


@pytest.mark.parametrize("heading,kind", [
    ("Abstract", SectionKind.ABSTRACT),
    ("1 Introduction", SectionKind.INTRODUCTION),
    ("3. Proposed Method", SectionKind.METHOD),
    ("Our Approach", SectionKind.METHOD),
    ("4 Experiments", SectionKind.EXPERIMENT),
    ("Results and Analysis", SectionKind.EXPERIMENT),
    ("Evaluation", SectionKind.EXPERIMENT),
    ("REFERENCES", SectionKind.REFERENCES),
    ("Bibliography", SectionKind.REFERENCES),
    ("Related Work", SectionKind.OTHER),
    ("Conclusion", SectionKind.OTHER),
    # first match wins: method is scanned before experiment
    ("Method Evaluation", SectionKind.METHOD),
])
def test_classify_heading(heading, kind):
    assert docparse.classify_heading(heading) is kind


def test_segment_sections_basic():
    body = "# Title\n\n## Abstract\n\nShort.\n\n## 1 Introduction\n\nLong.\n"
    secs = docparse.segment_sections(body)
    assert [s.kind for s in secs] == [SectionKind.OTHER, SectionKind.ABSTRACT, SectionKind.INTRODUCTION]
    assert secs[1].body == "\nShort.\n\n"
    assert body[secs[2].start:secs[2].end] == secs[2].body


def test_segment_sections_preamble_and_no_headings():
    secs = docparse.segment_sections("authors line\n# Abstract\ntext\n")
    assert secs[0] == Section(SectionKind.OTHER, "", "authors line\n", 0, 13)
    only = docparse.segment_sections("no headings at all\n")
    assert [s.kind for s in only] == [SectionKind.OTHER]


def test_segment_sections_ignores_fenced_and_deep_headings():
    body = "## Method\n```\n# comment\n```\n### Detail\ntext\n## Results\nx\n"
    secs = docparse.segment_sections(body)
    assert [s.heading for s in secs] == ["Method", "Results"]


def test_duplicate_abstract_demoted():
    body = "# Abstract\na\n# Abstract\nb\n# References\n[1] x\n# References\n[2] y\n"
    kinds = [s.kind for s in docparse.segment_sections(body)]
    assert kinds.count(SectionKind.ABSTRACT) == 1
    assert kinds.count(SectionKind.REFERENCES) == 1


def test_sections_reconstruct_body():
    text = (CLUSTER4 / "docs" / "gatedconv.md").read_text(encoding="utf-8")
    secs = docparse.segment_sections(text)
    heading_lines = [ln for ln in text.splitlines(keepends=True) if docparse._HEADING.match(ln.rstrip("\n"))]
    stripped = "".join(ln for ln in text.splitlines(keepends=True) if ln not in heading_lines)
    assert "".join(s.body for s in secs) == stripped
    for a, b in zip(secs, secs[1:]):
        assert a.end <= b.start


@pytest.mark.parametrize("raw,value,emphasis,percent", [
    ("76.1", 76.1, False, False),
    ("**78.0**", 78.0, True, False),
    ("*80.4*", 80.4, True, False),
    ("45%", 45.0, False, True),
    ("-3.5", -3.5, False, False),
    ("−2", -2.0, False, False),
    ("+.5", 0.5, False, False),
    ("—", None, False, False),
    ("n/a", None, False, False),
    ("1,000", None, False, False),
])
def test_parse_cell(raw, value, emphasis, percent):
    cell = docparse.parse_cell(raw)
    assert cell.value == value
    assert cell.emphasis is emphasis
    assert cell.percent is percent
    assert cell.raw == raw


def test_split_row_escaped_pipe():
    assert docparse.split_row(r"| a \| b | c |") == ["a | b", "c"]
    assert docparse.split_row("a | b") == ["a", "b"]


def test_extract_tables_fixture():
    text = (CLUSTER4 / "docs" / "gatedconv.md").read_text(encoding="utf-8")
    (table,) = docparse.extract_tables(text, "gatedconv")
    assert table.caption == "Table 1: ImageNet and CIFAR-100 top-1 accuracy (%), and cost."
    assert table.headers == ["Model", "ImageNet Top-1", "CIFAR-100 Top-1", "FLOPs (G)"]
    assert len(table.rows) == 4
    assert table.cell(3, 1).value == 78.0 and table.cell(3, 1).emphasis
    assert table.cell(2, 2).value is None
    assert [n.kind for n in table.notes] == ["RowArityMismatch"]
    assert table.source_doc == "gatedconv"


def test_extract_tables_ordinals_and_caption_below():
    body = (
        "| A | B |\n|---|---|\n| x | 1 |\n\nTable 1: below.\n\n"
        "Table 2: above.\n\n| C | D |\n|:-:|--:|\n| y | 2 |\n"
    )
    t1, t2 = docparse.extract_tables(body)
    assert (t1.ordinal, t1.caption) == (0, "Table 1: below.")
    assert (t2.ordinal, t2.caption) == (1, "Table 2: above.")


def test_extract_tables_skips_fenced():
    body = "```\n| A | B |\n|---|---|\n| 1 | 2 |\n```\n"
    assert docparse.extract_tables(body) == []


def test_not_a_table_without_delimiter():
    assert docparse.extract_tables("a | b\nc | d\n") == []


def test_table_roundtrip_fixture():
    text = (CLUSTER4 / "docs" / "lightvit.md").read_text(encoding="utf-8")
    (table,) = docparse.extract_tables(text)
    md = docparse.table_to_markdown(table)
    (again,) = docparse.extract_tables(md)
    assert again.shape() == table.shape()
    assert docparse.table_to_markdown(again) == md


def _refs(body: str):
    return docparse.parse_references(Section(SectionKind.REFERENCES, "References", body))


def test_parse_references_three_numbered():
    body = "[1] A. One. 2001.\n[2] B. Two. In ICML, 2002.\n[3] C. Three (2003). Venue.\n"
    entries = _refs(body)
    assert [(e.index, e.year) for e in entries] == [(1, 2001), (2, 2002), (3, 2003)]


def test_parse_references_wrapped_entry():
    entries = _refs("1. A. Author. A long title that\n   continues here. NeurIPS, 2019.\n2. B. Short. 2020.\n")
    assert len(entries) == 2
    assert entries[0].raw == "A. Author. A long title that continues here. NeurIPS, 2019."
    assert entries[0].year == 2019


def test_parse_references_blank_line_style():
    entries = _refs("- A. One. 1999.\n\n- B. Two\n  continued. 2004.\n")
    assert [(e.index, e.raw, e.year) for e in entries] == [
        (1, "A. One. 1999.", 1999),
        (2, "B. Two continued. 2004.", 2004),
    ]


def test_parse_references_empty():
    assert _refs("") == []
    assert _refs("\n\n") == []


def test_parse_references_rejects_other_kind():
    with pytest.raises(ValueError):
        docparse.parse_references(Section(SectionKind.METHOD, "Method", "[1] x"))


def test_write_parse_report(tmp_path):
    text = (CLUSTER4 / "docs" / "gatedconv.md").read_text(encoding="utf-8")
    out = tmp_path / "parse_report.json"
    docparse.write_parse_report({"gatedconv": docparse.extract_tables(text, "gatedconv")}, out)
    report = json.loads(out.read_text())
    assert "gatedconv" in report
    assert "RowArityMismatch" in json.dumps(report)


def test_parsing_is_deterministic():
    text = (CLUSTER4 / "docs" / "stacknet.md").read_text(encoding="utf-8")
    assert docparse.segment_sections(text) == docparse.segment_sections(text)
    assert docparse.extract_tables(text) == docparse.extract_tables(text)
