"""Cluster manifests, parsed documents and the citation graph between them."""
from __future__ import annotations

import datetime as dt
import enum
import json
import logging
import re
import unicodedata
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from statistics import mean

import jsonschema

from .errors import ManifestSchema, MissingDocument, NotFound, OfflineUnavailable

logger = logging.getLogger(__name__)

YEAR_MIN, YEAR_MAX = 1900, 2099

_YEAR_TOKEN = re.compile(r"(?<!\d)(\d{4})(?!\d)")


class SectionKind(str, enum.Enum):
    ABSTRACT = "abstract"
    INTRODUCTION = "introduction"
    METHOD = "method"
    EXPERIMENT = "experiment"
    REFERENCES = "references"
    OTHER = "other"


class Split(str, enum.Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True)
class Section:
    kind: SectionKind
    heading: str
    body: str
    # character offsets of ``body`` in the source text
    start: int = 0
    end: int = 0


@dataclass(frozen=True)
class ReferenceEntry:
    index: int
    raw: str
    year: int | None = None
    matched_doc: str | None = None


@dataclass
class Document:
    id: str
    title: str
    authors: list[str]
    published_at: dt.date
    venue: str | None
    source_path: str
    sections: list[Section] = field(default_factory=list)
    references: list[ReferenceEntry] = field(default_factory=list)

    def section(self, kind: SectionKind) -> Section | None:
        for sec in self.sections:
            if sec.kind is kind:
                return sec
        return None

    @property
    def text(self) -> str:
        """Section bodies joined in order (heading lines excluded)."""
        return "".join(s.body for s in self.sections)


@dataclass
class Cluster:
    id: str
    label: str
    split: Split
    doc_ids: list[str]


@dataclass(frozen=True, order=True)
class CitationEdge:
    from_doc: str
    to_doc: str
    via_reference: int


@dataclass
class Corpus:
    clusters: dict[str, Cluster]
    documents: dict[str, Document]
    root: Path | None = None

    def cluster_docs(self, cluster_id: str) -> list[Document]:
        return [self.documents[d] for d in self.clusters[cluster_id].doc_ids]

    def stats(self) -> dict:
        """Per-split cluster counts and papers-per-cluster summary."""
        out: dict = {}
        for split in Split:
            sizes = [len(c.doc_ids) for c in self.clusters.values() if c.split is split]
            out[split.value] = {
                "clusters": len(sizes),
                "min_papers": min(sizes) if sizes else 0,
                "max_papers": max(sizes) if sizes else 0,
                "avg_papers": round(mean(sizes), 2) if sizes else 0.0,
            }
        sizes = [len(c.doc_ids) for c in self.clusters.values()]
        out["total"] = {
            "clusters": len(sizes),
            "documents": len(self.documents),
            "avg_papers": round(mean(sizes), 2) if sizes else 0.0,
        }
        return out


MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["clusters"],
    "properties": {
        "clusters": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "split", "docs"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "label": {"type": "string"},
                    "split": {"type": "string", "pattern": "(?i)^(train|test)$"},
                    "docs": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["id", "path", "title", "published_at"],
                            "properties": {
                                "id": {"type": "string", "minLength": 1},
                                "path": {"type": "string", "minLength": 1},
                                "title": {"type": "string"},
                                "published_at": {"type": "string"},
                                "authors": {"type": "array", "items": {"type": "string"}},
                                "venue": {"type": ["string", "null"]},
                            },
                        },
                    },
                },
            },
        }
    },
}


def parse_date(value: str) -> dt.date:
    """Parse ``YYYY-MM-DD`` (or ``YYYY-MM`` / ``YYYY``) into a UTC calendar day."""
    parts = value.strip().split("-")
    try:
        nums = [int(p) for p in parts]
        if not 1 <= len(nums) <= 3:
            raise ValueError(value)
        nums += [1] * (3 - len(nums))
        day = dt.date(*nums)
    except (TypeError, ValueError) as exc:
        raise ManifestSchema(f"unparseable date {value!r}") from exc
    if not YEAR_MIN <= day.year <= YEAR_MAX:
        raise ManifestSchema(f"date {value!r} outside {YEAR_MIN}-{YEAR_MAX}")
    return day


def load_manifest(path: str | Path, parallelism: int = 1) -> Corpus:
    """Load ``corpus.json`` and parse every listed markdown document.

    Document paths are resolved relative to the manifest's directory. A
    document listed in several clusters is loaded once; the same id bound
    to different files is a schema error.
    """
    from . import docparse

    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise MissingDocument(f"manifest not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestSchema(f"{path}: invalid JSON: {exc}") from exc
    try:
        jsonschema.validate(raw, MANIFEST_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path)
        raise ManifestSchema(f"{path}: {loc}: {exc.message}") from exc

    root = path.parent
    clusters: dict[str, Cluster] = {}
    entries: dict[str, dict] = {}
    for c in raw["clusters"]:
        if c["id"] in clusters:
            raise ManifestSchema(f"duplicate cluster id {c['id']!r}")
        doc_ids = [d["id"] for d in c["docs"]]
        if len(set(doc_ids)) != len(doc_ids):
            raise ManifestSchema(f"cluster {c['id']!r} lists a document twice")
        for d in c["docs"]:
            prev = entries.get(d["id"])
            if prev is not None and prev["path"] != d["path"]:
                raise ManifestSchema(f"document id {d['id']!r} bound to two paths")
            entries[d["id"]] = d
        clusters[c["id"]] = Cluster(
            id=c["id"],
            label=c.get("label") or c["id"],
            split=Split(c["split"].lower()),
            doc_ids=doc_ids,
        )

    for d in entries.values():
        if not (root / d["path"]).is_file():
            raise MissingDocument(f"document {d['id']!r}: file not found: {d['path']}")

    def _load(d: dict) -> Document:
        text = (root / d["path"]).read_text(encoding="utf-8")
        sections = docparse.segment_sections(text)
        refs_sec = next((s for s in sections if s.kind is SectionKind.REFERENCES), None)
        refs = docparse.parse_references(refs_sec) if refs_sec else []
        return Document(
            id=d["id"],
            title=d["title"],
            authors=list(d.get("authors") or []),
            published_at=parse_date(d["published_at"]),
            venue=d.get("venue"),
            source_path=d["path"],
            sections=sections,
            references=refs,
        )

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            loaded = list(pool.map(_load, entries.values()))
    else:
        loaded = [_load(d) for d in entries.values()]
    documents = {doc.id: doc for doc in loaded}

    corpus = Corpus(clusters=clusters, documents=documents, root=root)
    _attach_matches(corpus, build_citation_graph(corpus))
    for split, s in corpus.stats().items():
        if split != "total":
            logger.info("split %s: %d clusters, avg %.2f papers", split, s["clusters"], s["avg_papers"])
    return corpus


def normalize_title(text: str) -> str:
    """NFC, case-fold, and reduce every non-alphanumeric run to one space."""
    text = unicodedata.normalize("NFC", text).casefold()
    return " ".join("".join(ch if ch.isalnum() else " " for ch in text).split())


def build_citation_graph(corpus: Corpus) -> list[CitationEdge]:
    """Edges A -> B whenever a reference entry of A contains B's normalized title.

    The result is sorted and holds at most one edge per (A, B) pair, the
    one through the lowest reference index.
    """
    titles = {
        doc_id: f" {normalize_title(doc.title)} "
        for doc_id, doc in corpus.documents.items()
        if normalize_title(doc.title)
    }
    best: dict[tuple[str, str], int] = {}
    for doc_id, doc in corpus.documents.items():
        for ref in doc.references:
            haystack = f" {normalize_title(ref.raw)} "
            for other, needle in titles.items():
                if other == doc_id or needle not in haystack:
                    continue
                key = (doc_id, other)
                if key not in best or ref.index < best[key]:
                    best[key] = ref.index
    return sorted(CitationEdge(a, b, idx) for (a, b), idx in best.items())


def _attach_matches(corpus: Corpus, edges: list[CitationEdge]) -> None:
    by_ref = {(e.from_doc, e.via_reference): e.to_doc for e in edges}
    for doc in corpus.documents.values():
        doc.references = [
            ReferenceEntry(r.index, r.raw, r.year, by_ref.get((doc.id, r.index)))
            for r in doc.references
        ]


def resolve_reference_year(entry: ReferenceEntry | str) -> int | None:
    """Last standalone four-digit token within 1900-2099, else None."""
    raw = entry.raw if isinstance(entry, ReferenceEntry) else entry
    years = [int(m) for m in _YEAR_TOKEN.findall(raw)]
    years = [y for y in years if YEAR_MIN <= y <= YEAR_MAX]
    return years[-1] if years else None


@dataclass(frozen=True)
class MetadataRecord:
    paper_id: str
    title: str
    date: str
    venue: str | None
    raw: bytes


def fetch_metadata(
    paper_id: str,
    endpoint: str | Path,
    offline: bool = False,
    timeout: float = 10.0,
) -> MetadataRecord:
    """Fetch title/date/venue for ``paper_id``.

    ``endpoint`` is either an HTTP base URL (``GET <endpoint>/<paper_id>``)
    or a fixture directory holding ``<paper_id>.json``. In offline mode only
    fixture directories are consulted.
    """
    ep = str(endpoint)
    is_url = ep.startswith(("http://", "https://"))
    if not is_url:
        fixture_dir = Path(ep)
        if not fixture_dir.is_dir():
            raise OfflineUnavailable(f"no fixture directory at {fixture_dir}")
        fixture = fixture_dir / f"{paper_id}.json"
        if not fixture.is_file():
            raise NotFound(f"unknown paper id {paper_id!r}")
        return _metadata_from_bytes(paper_id, fixture.read_bytes())
    if offline:
        raise OfflineUnavailable(f"offline mode and {ep} is not a fixture directory")
    url = f"{ep.rstrip('/')}/{urllib.request.quote(paper_id, safe='')}"
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            body = resp.read()
    except urllib.error.HTTPError as exc:
        if exc.code == 404:
            raise NotFound(f"unknown paper id {paper_id!r}") from exc
        raise
    return _metadata_from_bytes(paper_id, body)


def _metadata_from_bytes(paper_id: str, body: bytes) -> MetadataRecord:
    data = json.loads(body.decode("utf-8"))
    return MetadataRecord(
        paper_id=paper_id,
        title=data["title"],
        date=data["date"],
        venue=data.get("venue"),
        raw=body,
    )
