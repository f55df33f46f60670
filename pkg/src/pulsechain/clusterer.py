"""Topic grouping: abstract embeddings, seeded K-Means and frequency labels."""
from __future__ import annotations

import json
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .backend import Backend
from .corpus import Document, SectionKind, Split
from .errors import DimensionMismatch, EmptyText, KExceedsN

MAX_ITER = 100


@dataclass(frozen=True)
class EmbeddingVector:
    doc_id: str
    values: tuple[float, ...]


@dataclass
class ClusterAssignment:
    k: int
    assignments: dict[str, int]
    centroids: np.ndarray
    inertia: float
    # inertia after every assignment step, initial step first
    trace: list[float] = field(default_factory=list)
    iterations: int = 0

    def members(self, index: int) -> list[str]:
        return [d for d, c in self.assignments.items() if c == index]


def embed_abstracts(docs: Sequence[Document], backend: Backend) -> list[EmbeddingVector]:
    texts = []
    for doc in docs:
        sec = doc.section(SectionKind.ABSTRACT)
        text = sec.body.strip() if sec else ""
        if not text:
            raise EmptyText(f"document {doc.id!r} has no abstract")
        texts.append(text)
    vectors = backend.embed(texts)
    if len({len(v) for v in vectors}) > 1:
        raise DimensionMismatch("backend returned vectors of differing dimension")
    return [EmbeddingVector(doc.id, tuple(v)) for doc, v in zip(docs, vectors)]


def _as_matrix(vectors) -> tuple[list[str], np.ndarray]:
    if len(vectors) and isinstance(vectors[0], EmbeddingVector):
        ids = [v.doc_id for v in vectors]
        rows = [v.values for v in vectors]
    else:
        rows = list(vectors)
        ids = [str(i) for i in range(len(rows))]
    if not rows:
        return ids, np.zeros((0, 0))
    if len({len(r) for r in rows}) > 1:
        raise DimensionMismatch("vectors differ in dimension")
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2 or not np.all(np.isfinite(x)):
        raise ValueError("vectors must be a finite 2-D array")
    return ids, x


def _assign(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, float]:
    d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)  # lowest centroid index on ties
    return labels, float(d2[np.arange(len(x)), labels].sum())


def kmeans(vectors, k: int, seed: int = 0, max_iter: int = MAX_ITER) -> ClusterAssignment:
    """Lloyd's algorithm from k distinct input points picked by a seeded shuffle.

    ``vectors`` is a list of :class:`EmbeddingVector` or plain coordinate
    rows (ids are then row indices as strings). Stops when assignments
    no longer change or after ``max_iter`` update steps. A centroid whose
    cluster empties keeps its previous position.
    """
    if k < 1:
        raise ValueError("k must be positive")
    ids, x = _as_matrix(vectors)
    n = len(x)
    if k > n:
        raise KExceedsN(f"k={k} exceeds number of vectors n={n}")

    order = np.random.default_rng(seed).permutation(n)
    picked: list[int] = []
    for idx in order:
        if not any(np.array_equal(x[idx], x[p]) for p in picked):
            picked.append(int(idx))
        if len(picked) == k:
            break
    for idx in order:  # fewer than k distinct points: fall back to duplicates
        if len(picked) == k:
            break
        if int(idx) not in picked:
            picked.append(int(idx))
    centroids = x[picked].copy()

    labels, inertia = _assign(x, centroids)
    trace = [inertia]
    iterations = 0
    for iterations in range(1, max_iter + 1):
        for c in range(k):
            members = x[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
        new_labels, inertia = _assign(x, centroids)
        trace.append(inertia)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels

    return ClusterAssignment(
        k=k,
        assignments={doc_id: int(c) for doc_id, c in zip(ids, labels)},
        centroids=centroids,
        inertia=inertia,
        trace=trace,
        iterations=iterations,
    )


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    text = resources.files("pulsechain").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


_TOKEN = re.compile(r"[a-z0-9]+")


def label_cluster(docs: Sequence[Document]) -> str:
    """Top three non-stopword tokens of titles and abstracts, hyphen-joined.

    Ties are broken lexicographically. Pure numbers and one-letter tokens
    never qualify.
    """
    if not docs:
        raise ValueError("label_cluster needs at least one document")
    counts: Counter[str] = Counter()
    stop = stopwords()
    for doc in docs:
        sec = doc.section(SectionKind.ABSTRACT)
        text = f"{doc.title} {sec.body if sec else ''}".lower()
        counts.update(
            t for t in _TOKEN.findall(text)
            if t not in stop and len(t) > 1 and not t.isdigit()
        )
    if not counts:
        return "unlabeled"
    top = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:3]
    return "-".join(tok for tok, _ in top)


def clusters_manifest(
    docs: Sequence[Document],
    assignment: ClusterAssignment,
    split: Split = Split.TRAIN,
) -> dict:
    """Manifest-shaped dict (``corpus.json`` schema) for a clustering result."""
    by_id = {d.id: d for d in docs}
    clusters = []
    for c in range(assignment.k):
        members = [by_id[d] for d in assignment.members(c)]
        if not members:
            continue
        clusters.append({
            "id": f"cluster-{c:03d}",
            "label": label_cluster(members),
            "split": split.value,
            "docs": [
                {
                    "id": d.id,
                    "path": d.source_path,
                    "title": d.title,
                    "published_at": d.published_at.isoformat(),
                    "authors": d.authors,
                    "venue": d.venue,
                }
                for d in members
            ],
        })
    return {"clusters": clusters}


def write_clusters(manifest: dict, path: str | Path, source_dir: str | Path | None = None) -> None:
    """Write ``manifest``; paths relative to ``source_dir`` are rebased onto ``path``'s directory."""
    path = Path(path)
    if source_dir is not None:
        out_dir = path.resolve().parent
        for cluster in manifest["clusters"]:
            for d in cluster["docs"]:
                d["path"] = Path(os.path.relpath(Path(source_dir).resolve() / d["path"], out_dir)).as_posix()
    path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
