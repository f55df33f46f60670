"""Markdown segmentation: typed sections, pipe tables and reference entries.

Input is the markdown produced by an upstream PDF converter. Everything
here is a pure function of the input text.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import ReferenceEntry, Section, SectionKind, resolve_reference_year

# first match wins, scanned in this order
KIND_KEYWORDS: list[tuple[SectionKind, tuple[str, ...]]] = [
    (SectionKind.ABSTRACT, ("abstract",)),
    (SectionKind.INTRODUCTION, ("introduction",)),
    (SectionKind.METHOD, ("method", "approach")),
    (SectionKind.EXPERIMENT, ("experiment", "result", "evaluation")),
    (SectionKind.REFERENCES, ("reference", "bibliography")),
]

_HEADING = re.compile(r"^(#{1,2})[ \t]+(.*?)[ \t]*#*[ \t]*$")
_FENCE = re.compile(r"^\s*(```|~~~)")
_DELIM_CELL = re.compile(r"^\s*:?-{1,}:?\s*$")
_CAPTION = re.compile(r"^\s*(?:\*\*|__)?\s*Table\s+\d+\s*[:.]", re.IGNORECASE)
_NUMBER = re.compile(r"^([+\-−]?)(\d+(?:\.\d*)?|\.\d+)(%?)$")
_EMPHASIS = re.compile(r"^(\*\*|__|\*|_)(.+)\1$")


def classify_heading(heading: str) -> SectionKind:
    low = heading.casefold()
    for kind, words in KIND_KEYWORDS:
        if any(w in low for w in words):
            return kind
    return SectionKind.OTHER


def segment_sections(body: str) -> list[Section]:
    """Split ``body`` at level-1 and level-2 ATX headings.

    Text before the first heading becomes an untitled Other section when
    non-empty. A second Abstract or References heading is demoted to
    Other. Headings inside fenced code blocks are ignored.
    """
    lines = body.splitlines(keepends=True)
    headings: list[tuple[int, int, str]] = []  # (line start, line end, heading text)
    pos = 0
    in_fence = False
    for line in lines:
        if _FENCE.match(line):
            in_fence = not in_fence
        elif not in_fence:
            m = _HEADING.match(line.rstrip("\r\n"))
            if m:
                headings.append((pos, pos + len(line), m.group(2).strip()))
        pos += len(line)

    if not headings:
        return [Section(SectionKind.OTHER, "", body, 0, len(body))]

    sections: list[Section] = []
    if headings[0][0] > 0:
        sections.append(Section(SectionKind.OTHER, "", body[: headings[0][0]], 0, headings[0][0]))
    seen: set[SectionKind] = set()
    for i, (_, body_start, text) in enumerate(headings):
        end = headings[i + 1][0] if i + 1 < len(headings) else len(body)
        kind = classify_heading(text)
        if kind in (SectionKind.ABSTRACT, SectionKind.REFERENCES) and kind in seen:
            kind = SectionKind.OTHER
        seen.add(kind)
        sections.append(Section(kind, text, body[body_start:end], body_start, end))
    return sections


@dataclass(frozen=True)
class Cell:
    raw: str
    value: float | None = None
    emphasis: bool = False
    percent: bool = False


@dataclass(frozen=True)
class ParseNote:
    kind: str
    detail: str
    line: int | None = None


@dataclass
class Table:
    caption: str | None
    headers: list[str]
    rows: list[list[Cell]]
    source_doc: str = ""
    ordinal: int = 0
    notes: list[ParseNote] = field(default_factory=list)

    def numeric_count(self) -> int:
        return sum(1 for row in self.rows for c in row if c.value is not None)

    def cell(self, row: int, column: int) -> Cell:
        return self.rows[row][column]

    def shape(self) -> tuple:
        """Comparable content, ignoring provenance and notes."""
        return (self.caption, tuple(self.headers), tuple(tuple(r) for r in self.rows))


def parse_cell(raw: str) -> Cell:
    """Parse a cell, stripping one level of emphasis before reading a number.

    Accepted numbers: optional sign, decimals, optional percent suffix.
    Percent values are stored as written (``45%`` -> 45.0) with the flag set.
    """
    text = raw.strip()
    emphasis = False
    m = _EMPHASIS.match(text)
    if m:
        emphasis = True
        text = m.group(2).strip()
    num = _NUMBER.match(text)
    if not num:
        return Cell(raw=raw.strip(), emphasis=emphasis)
    sign, digits, pct = num.groups()
    value = float(digits) * (-1.0 if sign in ("-", "−") else 1.0)
    if not math.isfinite(value):
        return Cell(raw=raw.strip(), emphasis=emphasis)
    return Cell(raw=raw.strip(), value=value, emphasis=emphasis, percent=bool(pct))


def split_row(line: str) -> list[str]:
    """Split a pipe row into raw cell strings, honouring ``\\|`` escapes."""
    s = line.strip()
    if s.startswith("|"):
        s = s[1:]
    if s.endswith("|") and not s.endswith("\\|"):
        s = s[:-1]
    cells, buf, i = [], [], 0
    while i < len(s):
        ch = s[i]
        if ch == "\\" and i + 1 < len(s) and s[i + 1] == "|":
            buf.append("|")
            i += 2
            continue
        if ch == "|":
            cells.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
        i += 1
    cells.append("".join(buf).strip())
    return cells


def _is_delimiter(line: str) -> bool:
    if "-" not in line or "|" not in line:
        return False
    cells = split_row(line)
    return bool(cells) and all(_DELIM_CELL.match(c) for c in cells)


def _is_row(line: str) -> bool:
    return "|" in line and line.strip() != ""


def _caption_near(lines: list[str], start: int, end: int) -> str | None:
    """A ``Table N:`` line directly above the table (one blank line allowed), else below."""
    for idx in (start - 1, start - 2):
        if idx < 0:
            break
        text = lines[idx].strip()
        if _CAPTION.match(text):
            return _clean_caption(text)
        if text:
            break
    for idx in (end, end + 1):
        if idx >= len(lines):
            break
        text = lines[idx].strip()
        if _CAPTION.match(text):
            return _clean_caption(text)
        if text:
            break
    return None


def _clean_caption(text: str) -> str:
    m = _EMPHASIS.match(text)
    if m:
        return m.group(2).strip()
    for mark in ("**", "__"):
        if text.startswith(mark):
            text = text[len(mark):].replace(mark, "", 1)
    return text.strip()


def extract_tables(body: str, source_doc: str = "") -> list[Table]:
    """Parse every pipe table in ``body``.

    Rows whose cell count differs from the header are dropped and
    recorded as ``RowArityMismatch`` notes on the table.
    """
    lines = body.splitlines()
    tables: list[Table] = []
    i = 0
    in_fence = False
    while i < len(lines):
        line = lines[i]
        if _FENCE.match(line):
            in_fence = not in_fence
            i += 1
            continue
        if in_fence or not _is_row(line) or i + 1 >= len(lines) or not _is_delimiter(lines[i + 1]):
            i += 1
            continue
        headers = split_row(line)
        if len(split_row(lines[i + 1])) != len(headers):
            i += 1
            continue
        start = i
        j = i + 2
        rows: list[list[Cell]] = []
        notes: list[ParseNote] = []
        while j < len(lines) and _is_row(lines[j]) and not _FENCE.match(lines[j]):
            cells = split_row(lines[j])
            if len(cells) != len(headers):
                notes.append(ParseNote(
                    "RowArityMismatch",
                    f"expected {len(headers)} cells, found {len(cells)}",
                    line=j + 1,
                ))
            else:
                rows.append([parse_cell(c) for c in cells])
            j += 1
        tables.append(Table(
            caption=_caption_near(lines, start, j),
            headers=headers,
            rows=rows,
            source_doc=source_doc,
            ordinal=len(tables),
            notes=notes,
        ))
        i = j
    return tables


def _escape_cell(text: str) -> str:
    return text.replace("|", "\\|")


def table_to_markdown(table: Table) -> str:
    """Normalized markdown for ``table``; :func:`extract_tables` reads it back unchanged."""
    out = []
    if table.caption:
        out += [table.caption, ""]
    out.append("| " + " | ".join(_escape_cell(h) for h in table.headers) + " |")
    out.append("| " + " | ".join("---" for _ in table.headers) + " |")
    for row in table.rows:
        out.append("| " + " | ".join(_escape_cell(c.raw) for c in row) + " |")
    return "\n".join(out) + "\n"


_SQUARE = re.compile(r"^\s*\[(\d{1,4})\]\s*")
_DOTTED = re.compile(r"^\s*(\d{1,3})\.\s+")


def parse_references(section: Section) -> list[ReferenceEntry]:
    """Split a References section into entries.

    Numbered markers (``[n]`` or ``n.``) start new entries and unmarked
    lines continue the previous one. Without markers, blank lines
    separate entries.
    """
    if section.kind is not SectionKind.REFERENCES:
        raise ValueError(f"expected a References section, got {section.kind.value}")
    lines = section.body.splitlines()
    marker = None
    for line in lines:
        if _SQUARE.match(line):
            marker = _SQUARE
            break
        if _DOTTED.match(line):
            marker = _DOTTED
            break

    chunks: list[tuple[int | None, list[str]]] = []
    if marker is not None:
        for line in lines:
            m = marker.match(line)
            if m:
                chunks.append((int(m.group(1)), [line[m.end():]]))
            elif line.strip() and chunks:
                chunks[-1][1].append(line)
    else:
        current: list[str] = []
        for line in lines + [""]:
            if line.strip():
                current.append(line)
            elif current:
                chunks.append((None, current))
                current = []

    entries = []
    for ordinal, (index, parts) in enumerate(chunks, start=1):
        raw = " ".join(" ".join(p.split()) for p in parts if p.strip())
        raw = re.sub(r"^[-*]\s+", "", raw) if marker is None else raw
        if not raw:
            continue
        entries.append(ReferenceEntry(
            index=index if index is not None else ordinal,
            raw=raw,
            year=resolve_reference_year(raw),
        ))
    return entries


def write_parse_report(docs_tables: dict[str, list[Table]], path: str | Path) -> None:
    """Write ``parse_report.json``: table notes keyed by document id."""
    report = {
        doc_id: [
            {"table": t.ordinal, "kind": n.kind, "line": n.line, "detail": n.detail}
            for t in tables
            for n in t.notes
        ]
        for doc_id, tables in sorted(docs_tables.items())
    }
    Path(path).write_text(json.dumps(report, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
