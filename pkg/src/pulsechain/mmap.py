"""Method tracking: motivation/method pairs, the time-sorted chain, its
markdown form and a left-to-right mind map."""
from __future__ import annotations

import datetime as dt
import re
import textwrap
from collections import Counter
from dataclasses import dataclass, field
from itertools import groupby
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

from .backend import Backend
from .errors import DuplicateDoc, EmptyChain
from .figure import DEFAULT_RASTER, Figure, Line, Polyline, Rect, Scene, Text, render_scene, text_width
from .prompting import DEFAULT_REPAIR_LIMIT, ReplyViolation, extract_with_repair, fenced_block, load_template

if TYPE_CHECKING:
    from .pipeline import ExtractedDocument

MAX_FIELD_CHARS = 2000
ELLIPSIS = "…"
WRAP_WIDTH = 60


@dataclass(frozen=True)
class MotivationMethodPair:
    doc_id: str
    motivation: str
    method: str
    published_at: dt.date
    title: str = ""
    repair_count: int = 0

    def __post_init__(self):
        for name in ("motivation", "method"):
            value = getattr(self, name)
            if not value.strip():
                raise ValueError(f"{name} must be non-empty")
            if len(value) > MAX_FIELD_CHARS:
                raise ValueError(f"{name} exceeds {MAX_FIELD_CHARS} characters")


@dataclass
class MethodChain:
    cluster_id: str
    pairs: list[MotivationMethodPair] = field(default_factory=list)
    label: str = ""

    def __len__(self) -> int:
        return len(self.pairs)


def truncate(text: str, limit: int = MAX_FIELD_CHARS) -> str:
    """Cut ``text`` to at most ``limit`` chars at a word boundary, marking the cut."""
    text = " ".join(text.split())
    if len(text) <= limit:
        return text
    cut = text[: limit - len(ELLIPSIS)]
    space = cut.rfind(" ")
    if space > 0:
        cut = cut[:space]
    return cut.rstrip() + ELLIPSIS


def parse_pair_reply(reply: str) -> tuple[str, str]:
    """Read the ```pair block; raise :class:`ReplyViolation` on any contract breach."""
    block = fenced_block(reply, "pair")
    if block is None:
        raise ReplyViolation(["no ```pair fenced block found"])
    fields: dict[str, list[str]] = {}
    current = None
    problems = []
    for line in block.splitlines():
        m = re.match(r"^\s*(motivation|method)\s*:\s*(.*)$", line, re.IGNORECASE)
        if m:
            current = m.group(1).lower()
            if current in fields:
                problems.append(f"field '{current}' appears twice")
            fields[current] = [m.group(2)]
        elif line.strip():
            if current is None:
                problems.append(f"text outside a field: {line.strip()!r}")
            else:
                fields[current].append(line)
    for name in ("motivation", "method"):
        if name not in fields:
            problems.append(f"missing field '{name}'")
        elif not " ".join(fields[name]).strip():
            problems.append(f"field '{name}' is empty")
    if problems:
        raise ReplyViolation(problems)
    return truncate(" ".join(fields["motivation"])), truncate(" ".join(fields["method"]))


def extract_pair(
    xdoc: "ExtractedDocument",
    backend: Backend,
    instruction: str = "",
    repair_limit: int = DEFAULT_REPAIR_LIMIT,
    template_path: str | Path | None = None,
) -> MotivationMethodPair:
    if not (xdoc.abstract.strip() or xdoc.introduction.strip()):
        raise ValueError(f"document {xdoc.doc_id!r} has neither abstract nor introduction")
    prompt = load_template("mmap_extract", template_path).substitute(
        instruction=instruction,
        title=xdoc.title,
        abstract=xdoc.abstract.strip(),
        introduction=xdoc.introduction.strip(),
    )
    (motivation, method), repairs = extract_with_repair(
        backend, "mmap", prompt, parse_pair_reply, repair_limit, subject=xdoc.doc_id
    )
    return MotivationMethodPair(
        doc_id=xdoc.doc_id,
        motivation=motivation,
        method=method,
        published_at=xdoc.published_at,
        title=xdoc.title,
        repair_count=repairs,
    )


def sort_chain(pairs: Sequence[MotivationMethodPair], cluster_id: str = "", label: str = "") -> MethodChain:
    """Order pairs by publication date, ties by doc id."""
    seen = set()
    for p in pairs:
        if p.doc_id in seen:
            raise DuplicateDoc(f"document {p.doc_id!r} appears twice in the chain")
        seen.add(p.doc_id)
    ordered = sorted(pairs, key=lambda p: (p.published_at, p.doc_id))
    return MethodChain(cluster_id=cluster_id, pairs=ordered, label=label or cluster_id)


# -- markdown -------------------------------------------------------------

def escape_md(text: str) -> str:
    text = " ".join(text.split()).replace("\\", "\\\\").replace("#", "\\#")
    if text.startswith("-"):
        text = "\\" + text
    return text


def _node_names(pairs: Sequence[MotivationMethodPair]) -> dict[str, str]:
    """Heading text per doc id; papers sharing a title and date get their id appended."""
    base = {p.doc_id: escape_md(p.title) or escape_md(p.doc_id) or "untitled" for p in pairs}
    keys = Counter((base[p.doc_id], p.published_at) for p in pairs)
    return {
        p.doc_id: base[p.doc_id] if keys[(base[p.doc_id], p.published_at)] == 1
        else f"{base[p.doc_id]} [{escape_md(p.doc_id)}]"
        for p in pairs
    }


def emit_chain_markdown(chain: MethodChain) -> str:
    lines = [f"# {escape_md(chain.label or chain.cluster_id)}"]
    names = _node_names(chain.pairs)
    for year, group in groupby(chain.pairs, key=lambda p: p.published_at.year):
        lines += ["", f"## {year}"]
        for p in group:
            lines += [
                "",
                f"### {names[p.doc_id]} ({p.published_at.isoformat()})",
                "",
                f"- Motivation: {escape_md(p.motivation)}",
                f"- Method: {escape_md(p.method)}",
            ]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Violation:
    kind: str  # SchemaViolation | DuplicateNode | OrderViolation | HierarchyViolation
    node: str
    detail: str = ""


_PAPER_HEAD = re.compile(r"^### (.+) \((\d{4}-\d{2}-\d{2})\)$")


def validate_chain_markdown(text: str) -> list[Violation]:
    """Structural check of chain markdown; an empty list means valid."""
    out: list[Violation] = []
    if not text.endswith("\n") or text.endswith("\n\n"):
        out.append(Violation("SchemaViolation", "<document>", "must end with exactly one newline"))
    roots = 0
    year: int | None = None
    last_date: dt.date | None = None
    paper: str | None = None
    bullets: dict[str, int] = {}
    seen_papers: set[str] = set()

    def close_paper():
        if paper is None:
            return
        for b in ("Motivation", "Method"):
            n = bullets.get(b, 0)
            if n != 1:
                out.append(Violation("SchemaViolation", paper, f"expected one {b} bullet, found {n}"))

    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("# "):
            roots += 1
            if roots > 1:
                out.append(Violation("HierarchyViolation", line, "second root heading"))
            if year is not None:
                out.append(Violation("HierarchyViolation", line, "root heading after year groups"))
        elif line.startswith("## "):
            close_paper()
            paper = None
            label = line[3:].strip()
            if roots == 0:
                out.append(Violation("HierarchyViolation", label, "year group before root"))
            if not re.fullmatch(r"\d{4}", label):
                out.append(Violation("SchemaViolation", label, "year group heading is not a year"))
                continue
            y = int(label)
            if year is not None and y <= year:
                out.append(Violation("OrderViolation", label, f"year {y} does not follow {year}"))
            year = y
        elif line.startswith("### "):
            close_paper()
            m = _PAPER_HEAD.match(line)
            paper = line[4:].strip()
            bullets = {}
            if year is None:
                out.append(Violation("HierarchyViolation", paper, "paper node outside a year group"))
            if not m:
                out.append(Violation("SchemaViolation", paper, "paper heading lacks '(YYYY-MM-DD)'"))
            else:
                try:
                    date = dt.date.fromisoformat(m.group(2))
                except ValueError:
                    out.append(Violation("SchemaViolation", paper, "invalid date"))
                else:
                    if year is not None and date.year != year:
                        out.append(Violation("OrderViolation", paper, f"dated {date.year} under {year}"))
                    if last_date is not None and date < last_date:
                        out.append(Violation("OrderViolation", paper, "paper dates not nondecreasing"))
                    last_date = date
            if paper in seen_papers:
                out.append(Violation("DuplicateNode", paper))
            seen_papers.add(paper)
        elif line.startswith("#"):
            out.append(Violation("HierarchyViolation", line, f"unexpected heading at line {lineno}"))
        elif line.startswith("- Motivation: ") or line.startswith("- Method: "):
            name = line[2:].split(":", 1)[0]
            if paper is None:
                out.append(Violation("SchemaViolation", line, "bullet outside a paper node"))
            elif not line.split(":", 1)[1].strip():
                out.append(Violation("SchemaViolation", paper, f"empty {name} bullet"))
                bullets[name] = bullets.get(name, 0) + 1
            else:
                bullets[name] = bullets.get(name, 0) + 1
        else:
            out.append(Violation("SchemaViolation", line[:40], f"unexpected line {lineno}"))
    close_paper()
    if roots == 0:
        out.append(Violation("HierarchyViolation", "<document>", "missing root heading"))
    return out


# -- mind map -------------------------------------------------------------

FONT = 12.0
LINE_H = 16.0
PAD = 8.0
MARGIN = 24.0
COL_GAP = 64.0
ROW_GAP = 14.0
INDENT = 20.0
FIELD_LINES = 3


@dataclass
class Node:
    kind: str  # root | year | leaf
    lines: list[str]
    x: float = 0.0
    y: float = 0.0
    w: float = 0.0
    h: float = 0.0
    doc_id: str | None = None

    def overlaps(self, other: "Node") -> bool:
        return not (
            self.x + self.w <= other.x or other.x + other.w <= self.x
            or self.y + self.h <= other.y or other.y + other.h <= self.y
        )


@dataclass
class MindMapLayout:
    root: Node
    years: list[Node]
    leaves: list[Node]
    edges: list[tuple[tuple[float, float], ...]]
    width: float
    height: float

    @property
    def nodes(self) -> list[Node]:
        return [self.root, *self.years, *self.leaves]


def wrap(text: str, width: int = WRAP_WIDTH, max_lines: int | None = None) -> list[str]:
    lines = textwrap.wrap(text, width=width, break_long_words=True, break_on_hyphens=False) or [""]
    if max_lines is not None and len(lines) > max_lines:
        lines = lines[:max_lines]
        last = lines[-1]
        lines[-1] = (last[: width - 1] if len(last) >= width else last) + ELLIPSIS
    return lines


def _sized(node: Node) -> Node:
    node.w = max(text_width(line, FONT) for line in node.lines) + 2 * PAD
    node.h = len(node.lines) * LINE_H + 2 * PAD
    return node


def leaf_lines(pair: MotivationMethodPair) -> list[str]:
    return (
        wrap(f"{pair.title or pair.doc_id} ({pair.published_at.isoformat()})")
        + wrap(f"Motivation: {pair.motivation}", max_lines=FIELD_LINES)
        + wrap(f"Method: {pair.method}", max_lines=FIELD_LINES)
    )


def layout_mindmap(chain: MethodChain) -> MindMapLayout:
    """Root at the left on the year row, one column per year, papers stacked below.

    Root-to-year edges run along the year row and are hidden behind the
    year boxes they pass, so they read as a timeline spine.
    """
    if not chain.pairs:
        raise EmptyChain("cannot lay out an empty chain")
    root = _sized(Node("root", wrap(chain.label or chain.cluster_id)))
    root.x, root.y = MARGIN, MARGIN
    years: list[Node] = []
    leaves: list[Node] = []
    edges: list[tuple[tuple[float, float], ...]] = []
    x = root.x + root.w + COL_GAP
    bottom = MARGIN + root.h
    year_h = _sized(Node("year", ["0000"])).h
    row_y = MARGIN + max(0.0, (root.h - year_h) / 2)
    for year, group in groupby(chain.pairs, key=lambda p: p.published_at.year):
        ynode = _sized(Node("year", [str(year)]))
        ynode.x, ynode.y = x, row_y
        years.append(ynode)
        col_w = ynode.w
        y = ynode.y + ynode.h + ROW_GAP
        trunk_x = x + INDENT / 2
        for pair in group:
            leaf = _sized(Node("leaf", leaf_lines(pair), doc_id=pair.doc_id))
            leaf.x, leaf.y = x + INDENT, y
            leaves.append(leaf)
            edges.append(((trunk_x, ynode.y + ynode.h), (trunk_x, leaf.y + leaf.h / 2), (leaf.x, leaf.y + leaf.h / 2)))
            y += leaf.h + ROW_GAP
            col_w = max(col_w, INDENT + leaf.w)
        bottom = max(bottom, y - ROW_GAP)
        x += col_w + COL_GAP
    height = bottom + MARGIN
    root.y = row_y + year_h / 2 - root.h / 2
    root_edges = [
        ((root.x + root.w, yn.y + yn.h / 2), (yn.x, yn.y + yn.h / 2)) for yn in years
    ]
    return MindMapLayout(
        root=root,
        years=years,
        leaves=leaves,
        edges=root_edges + edges,
        width=x - COL_GAP + MARGIN,
        height=height,
    )


def mindmap_scene(layout: MindMapLayout, title: str = "") -> Scene:
    scene = Scene(layout.width, layout.height, title=title)
    for pts in layout.edges:
        if len(pts) == 2:
            (x1, y1), (x2, y2) = pts
            scene.add(Line(x1, y1, x2, y2, stroke="#555555", stroke_width=1.5))
        else:
            scene.add(Polyline(tuple(pts), stroke="#777777", stroke_width=1.0))
    styles = {
        "root": ("#333333", "#333333", "#ffffff", "bold"),
        "year": ("#cccccc", "#555555", "#000000", "bold"),
        "leaf": ("#ffffff", "#000000", "#000000", "normal"),
    }
    for node in layout.nodes:
        fill, stroke, ink, weight = styles[node.kind]
        scene.add(Rect(node.x, node.y, node.w, node.h, fill=fill, stroke=stroke, rx=4.0))
        for i, line in enumerate(node.lines):
            bold = weight if (node.kind != "leaf" or i == 0) else "normal"
            scene.add(Text(node.x + PAD, node.y + PAD + (i + 1) * LINE_H - 4, line,
                           size=FONT, fill=ink, weight=bold))
    return scene


def render_mindmap(chain: MethodChain, raster_size: tuple[int, int] = DEFAULT_RASTER) -> Figure:
    layout = layout_mindmap(chain)
    return render_scene(mindmap_scene(layout, title=chain.label or chain.cluster_id), raster_size)
