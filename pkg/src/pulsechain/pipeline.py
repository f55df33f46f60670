"""Plan agent: intent routing, per-document extraction and the end-to-end run."""
from __future__ import annotations

import datetime as dt
import enum
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import lchart, mmap
from .backend import Backend
from .config import Config
from .corpus import Corpus, Document, ReferenceEntry, SectionKind
from .docparse import Table, extract_tables
from .errors import AmbiguousIntent, EmptyCluster, ParseFailure, PulseError
from .prompting import ReplyViolation, load_template

logger = logging.getLogger(__name__)


class Intent(str, enum.Enum):
    METHOD_TRACKING = "method_tracking"
    EXPERIMENTAL_ANALYSIS = "experimental_analysis"


METHOD_WORDS = ("method", "evolution", "evolv", "motivation")
EXPERIMENT_WORDS = ("result", "benchmark", "metric", "experiment", "compar")


@dataclass(frozen=True)
class Instruction:
    raw: str
    intent: Intent
    cluster_id: str


def classify_intent(raw: str, backend: Backend | None = None) -> Intent:
    """Keyword rules first; the backend only decides when no rule (or both) fire."""
    if not raw.strip():
        raise AmbiguousIntent("empty instruction")
    low = raw.casefold()
    method = any(w in low for w in METHOD_WORDS)
    experiment = any(w in low for w in EXPERIMENT_WORDS)
    if method != experiment:
        return Intent.METHOD_TRACKING if method else Intent.EXPERIMENTAL_ANALYSIS
    if backend is None:
        raise AmbiguousIntent(f"cannot classify {raw!r} without a backend")
    reply = backend.chat("plan", [("user", load_template("intent").substitute(instruction=raw.strip()))])
    word = reply.strip().strip("`.").casefold()
    for intent in Intent:
        if word == intent.value:
            return intent
    raise AmbiguousIntent(f"backend answered {reply.strip()!r} for {raw!r}")


@dataclass
class ExtractedDocument:
    doc_id: str
    title: str
    abstract: str
    introduction: str
    tables: list[Table]
    references: list[ReferenceEntry]
    published_at: dt.date

    @property
    def no_tables(self) -> bool:
        return not self.tables


def extract_document(doc: Document) -> ExtractedDocument:
    abstract = doc.section(SectionKind.ABSTRACT)
    intro = doc.section(SectionKind.INTRODUCTION)
    abstract_text = abstract.body.strip() if abstract else ""
    intro_text = intro.body.strip() if intro else ""
    if not (abstract_text or intro_text):
        raise ParseFailure(f"document {doc.id!r} has no usable abstract or introduction")
    return ExtractedDocument(
        doc_id=doc.id,
        title=doc.title,
        abstract=abstract_text,
        introduction=intro_text,
        tables=extract_tables(doc.text, source_doc=doc.id),
        references=list(doc.references),
        published_at=doc.published_at,
    )


@dataclass
class RunReport:
    cluster_id: str
    intent: Intent
    out_dir: Path
    cluster_size: int
    successes: list[str] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)
    render_ok: bool = False
    render_error: str | None = None
    repairs: dict[str, int] = field(default_factory=dict)
    notes: dict[str, list[str]] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    # wall-clock seconds; kept out of report.json so outputs stay byte-stable
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def chain_length(self) -> int:
        return len(self.successes)

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "intent": self.intent.value,
            "cluster_size": self.cluster_size,
            "chain_length": self.chain_length,
            "failure_count": len(self.failures),
            "successes": self.successes,
            "failures": self.failures,
            "repairs": self.repairs,
            "notes": self.notes,
            "render_ok": self.render_ok,
            "render_error": self.render_error,
            "artifacts": self.artifacts,
            **self.extra,
        }


def _failure(doc_id: str, exc: Exception) -> dict:
    return {"doc_id": doc_id, "error": type(exc).__name__, "message": str(exc)}


def _map_docs(fn, docs: list[Document], parallelism: int) -> dict[str, object]:
    """Run ``fn`` per document; values are results or the exception raised."""
    def safe(doc):
        try:
            return fn(doc)
        except (PulseError, ReplyViolation, ValueError) as exc:
            return exc

    if parallelism > 1 and len(docs) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(safe, docs))
    else:
        results = [safe(d) for d in docs]
    return dict(zip((d.id for d in docs), results))


def run(
    instruction: Instruction,
    corpus: Corpus,
    backend: Backend,
    out_dir: str | Path,
    config: Config | None = None,
) -> RunReport:
    """Execute one instruction on one cluster and write its artifacts.

    Outputs land in ``<out_dir>/<cluster_id>/<intent>/``. Documents that
    fail extraction are listed in the report; the rest still form a chain.
    """
    config = config or Config()
    if instruction.cluster_id not in corpus.clusters:
        raise EmptyCluster(f"unknown cluster {instruction.cluster_id!r}")
    cluster = corpus.clusters[instruction.cluster_id]
    docs = corpus.cluster_docs(cluster.id)
    if not docs:
        raise EmptyCluster(f"cluster {cluster.id!r} has no documents")

    target = Path(out_dir) / cluster.id / instruction.intent.value
    target.mkdir(parents=True, exist_ok=True)
    report = RunReport(cluster.id, instruction.intent, target, len(docs))
    t0 = time.perf_counter()

    if instruction.intent is Intent.METHOD_TRACKING:
        def work(doc):
            xdoc = extract_document(doc)
            return mmap.extract_pair(
                xdoc, backend, instruction.raw, config.repair_limit, config.mmap_prompt
            )
    else:
        def work(doc):
            xdoc = extract_document(doc)
            table = lchart.select_main_table(xdoc)
            return lchart.extract_record(
                xdoc, table, backend, instruction.raw, config.repair_limit, config.lchart_prompt
            )

    results = _map_docs(work, docs, config.parallelism)
    report.timings["extract"] = time.perf_counter() - t0
    ok = []
    for doc_id in sorted(results):
        res = results[doc_id]
        if isinstance(res, Exception):
            logger.warning("document %s failed: %s", doc_id, res)
            report.failures.append(_failure(doc_id, res))
        else:
            ok.append(res)
            report.successes.append(doc_id)
            report.repairs[doc_id] = res.repair_count

    t1 = time.perf_counter()
    for name in ("figure.svg", "figure.pgm"):
        (target / name).unlink(missing_ok=True)
    if instruction.intent is Intent.METHOD_TRACKING:
        chain = mmap.sort_chain(ok, cluster.id, cluster.label)
        text = mmap.emit_chain_markdown(chain)
        violations = mmap.validate_chain_markdown(text)
        report.extra["violations"] = [v.__dict__ for v in violations]
        _write(target / "chain.md", text, report)
        figure = _render(lambda: mmap.render_mindmap(chain, config.raster_size), report)
    else:
        for rec in ok:
            notes = [f"{n.kind}: {n.detail}" for n in rec.table.notes + rec.notes]
            if notes:
                report.notes[rec.doc_id] = notes
        try:
            chain = lchart.align_chain(ok, cluster.id, cluster.label)
        except PulseError as exc:
            chain = lchart.ExperimentChain(cluster.id, [], label=cluster.label)
            report.render_error = f"{type(exc).__name__}: {exc}"
        report.extra["alignment"] = lchart.chain_to_dict(chain)["stats"]
        _write(target / "echain.json", lchart.chain_to_json(chain), report)
        figure = _render(
            lambda: lchart.render_linechart(lchart.build_chart_spec(chain), config.raster_size), report
        )
    if figure is not None:
        _write(target / "figure.svg", figure.svg, report)
        _write(target / "figure.pgm", figure.pgm(), report)
    report.timings["render"] = time.perf_counter() - t1
    report.artifacts["report"] = "report.json"
    (target / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    report.timings["total"] = time.perf_counter() - t0
    return report


def _render(make, report: RunReport):
    try:
        figure = make()
    except PulseError as exc:
        report.render_ok = False
        report.render_error = report.render_error or f"{type(exc).__name__}: {exc}"
        return None
    report.render_ok = True
    return figure


def _write(path: Path, content: str | bytes, report: RunReport) -> None:
    if isinstance(content, bytes):
        path.write_bytes(content)
    else:
        path.write_text(content, encoding="utf-8", newline="\n")
    report.artifacts[path.stem if path.suffix != ".pgm" else "raster"] = path.name
