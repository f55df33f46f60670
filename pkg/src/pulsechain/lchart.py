"""Experimental analysis: main-table selection, record extraction, temporal
alignment into trend series, and a line-chart renderer."""
from __future__ import annotations

import datetime as dt
import enum
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import jsonschema

from .backend import Backend
from .corpus import YEAR_MAX, YEAR_MIN
from .docparse import ParseNote, Table, table_to_markdown
from .errors import EmptyChain, InvalidValue, NoTable
from .figure import DEFAULT_RASTER, Figure, Line, Marker, Polyline, Rect, Scene, Text, render_scene
from .prompting import DEFAULT_REPAIR_LIMIT, ReplyViolation, extract_with_repair, fenced_block, load_template

if TYPE_CHECKING:
    from .pipeline import ExtractedDocument

METRIC_KEYWORDS = ("accuracy", "f1", "bleu", "meteor", "psnr", "ssim", "fid", "pass@1", "top-1", "map")
LOWER_BETTER = ("fid", "lpips", "kid", "cmmd")
DEFAULT_DATASET = "default"


class Direction(str, enum.Enum):
    HIGHER = "higher"
    LOWER = "lower"

    @property
    def arrow(self) -> str:
        return "↑" if self is Direction.HIGHER else "↓"

    def better(self, a: float, b: float) -> bool:
        """True when ``a`` is strictly better than ``b``."""
        return a > b if self is Direction.HIGHER else a < b


def _has_keyword(text: str, words: Sequence[str]) -> bool:
    low = text.casefold()
    return any(re.search(rf"(?<![a-z0-9]){re.escape(w)}(?![a-z0-9])", low) for w in words)


def infer_direction(metric: str) -> Direction:
    if "↓" in metric:
        return Direction.LOWER
    if "↑" in metric:
        return Direction.HIGHER
    return Direction.LOWER if _has_keyword(metric, LOWER_BETTER) else Direction.HIGHER


def clean_metric(name: str) -> str:
    return " ".join(name.replace("↑", " ").replace("↓", " ").split())


@dataclass(frozen=True, order=True)
class Provenance:
    doc_id: str
    table: int
    row: int
    column: int

    def as_dict(self) -> dict:
        return {"doc_id": self.doc_id, "table": self.table, "row": self.row, "column": self.column}


@dataclass(frozen=True)
class MetricObservation:
    model: str
    metric: str
    dataset: str
    value: float
    direction: Direction
    source: Provenance


@dataclass
class ExperimentRecord:
    doc_id: str
    table: Table
    models: list[str]
    observations: list[MetricObservation]
    baseline_years: dict[str, int]
    published_at: dt.date
    notes: list[ParseNote] = field(default_factory=list)
    repair_count: int = 0

    def year_of(self, model: str) -> int:
        return self.baseline_years.get(model, self.published_at.year)


def table_score(table: Table) -> int:
    bonus = 10 if any(_has_keyword(h, METRIC_KEYWORDS) for h in table.headers) else 0
    return table.numeric_count() + bonus


def select_main_table(xdoc: "ExtractedDocument") -> Table:
    """Highest scoring table; the earliest one wins ties."""
    if not xdoc.tables:
        raise NoTable(f"document {xdoc.doc_id!r} has no tables")
    return max(xdoc.tables, key=lambda t: (table_score(t), -t.ordinal))


RECORD_SCHEMA = {
    "type": "object",
    "required": ["models", "observations"],
    "properties": {
        "models": {"type": "array", "minItems": 1, "items": {"type": "string", "minLength": 1}},
        "baselines": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
        "observations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["model", "metric", "row", "column"],
                "properties": {
                    "model": {"type": "string", "minLength": 1},
                    "metric": {"type": "string", "minLength": 1},
                    "dataset": {"type": ["string", "null"]},
                    "row": {"type": "integer", "minimum": 0},
                    "column": {"type": "integer", "minimum": 0},
                    "direction": {"enum": ["higher", "lower", None]},
                },
            },
        },
    },
}


@dataclass
class _Parsed:
    models: list[str]
    baselines: dict[str, int]
    observations: list[dict]


def make_record_parser(table: Table, reference_indices: set[int]):
    """Reply parser bound to one table: schema check plus cross-checks against it."""

    def parse(reply: str) -> _Parsed:
        block = fenced_block(reply, "json")
        if block is None:
            raise ReplyViolation(["no ```json fenced block found"])
        try:
            data = json.loads(block)
        except json.JSONDecodeError as exc:
            raise ReplyViolation([f"invalid JSON: {exc.msg} at line {exc.lineno}"]) from None
        errors = sorted(jsonschema.Draft7Validator(RECORD_SCHEMA).iter_errors(data), key=lambda e: list(e.path))
        if errors:
            raise ReplyViolation([
                f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors
            ])
        problems = []
        models = data["models"]
        baselines = data.get("baselines") or {}
        for name, idx in baselines.items():
            if name not in models:
                problems.append(f"baseline '{name}' is not listed in models")
            if idx not in reference_indices:
                problems.append(f"baseline '{name}' cites unknown reference [{idx}]")
        for i, obs in enumerate(data["observations"]):
            if obs["model"] not in models:
                problems.append(f"observations/{i}: model '{obs['model']}' is not listed in models")
            if obs["row"] >= len(table.rows) or obs["column"] >= len(table.headers):
                problems.append(f"observations/{i}: cell ({obs['row']}, {obs['column']}) is outside the table")
        if problems:
            raise ReplyViolation(problems)
        return _Parsed(models, baselines, data["observations"])

    return parse


def references_block(xdoc: "ExtractedDocument") -> str:
    return "\n".join(f"[{r.index}] {r.raw}" for r in xdoc.references) or "(none)"


def extract_record(
    xdoc: "ExtractedDocument",
    table: Table,
    backend: Backend,
    instruction: str = "",
    repair_limit: int = DEFAULT_REPAIR_LIMIT,
    template_path: str | Path | None = None,
) -> ExperimentRecord:
    """Ask the backend which cells hold which (model, metric, dataset).

    Values are read from the table cells themselves, so every observation
    traces back to a cell. Cited baselines get their reference's year.
    """
    prompt = load_template("lchart_extract", template_path).substitute(
        instruction=instruction,
        title=xdoc.title,
        table=table_to_markdown(table),
        references=references_block(xdoc),
    )
    refs = {r.index: r for r in xdoc.references}
    parsed, repairs = extract_with_repair(
        backend, "lchart", prompt, make_record_parser(table, set(refs)), repair_limit, subject=xdoc.doc_id
    )
    notes: list[ParseNote] = []
    years: dict[str, int] = {}
    for name, idx in sorted(parsed.baselines.items()):
        year = refs[idx].year
        if year is None or not YEAR_MIN <= year <= YEAR_MAX:
            notes.append(ParseNote("UnresolvedYear", f"baseline '{name}' -> [{idx}] has no year"))
        else:
            years[name] = year

    observations = []
    for obs in parsed.observations:
        cell = table.cell(obs["row"], obs["column"])
        src = Provenance(xdoc.doc_id, table.ordinal, obs["row"], obs["column"])
        if cell.value is None or not math.isfinite(cell.value):
            notes.append(ParseNote("NonNumericCell", f"cell ({src.row}, {src.column}) = {cell.raw!r} skipped"))
            continue
        header = table.headers[obs["column"]]
        direction = (
            Direction(obs["direction"]) if obs.get("direction")
            else infer_direction(f"{header} {obs['metric']}")
        )
        observations.append(MetricObservation(
            model=obs["model"],
            metric=clean_metric(obs["metric"]),
            dataset=(obs.get("dataset") or "").strip() or DEFAULT_DATASET,
            value=cell.value,
            direction=direction,
            source=src,
        ))
    return ExperimentRecord(
        doc_id=xdoc.doc_id,
        table=table,
        models=list(parsed.models),
        observations=observations,
        baseline_years=years,
        published_at=xdoc.published_at,
        notes=notes,
        repair_count=repairs,
    )


# -- alignment ------------------------------------------------------------

@dataclass
class TrendPoint:
    year: int
    model: str
    value: float
    # every observation of this (model, year), best first
    provenance: list[Provenance]
    # other models reported for the same year that did not win
    alternatives: list[dict] = field(default_factory=list)


@dataclass
class TrendSeries:
    metric: str
    dataset: str
    direction: Direction
    points: list[TrendPoint]


@dataclass
class AlignStats:
    total: int = 0
    kept: int = 0
    deduped: int = 0
    skipped: int = 0


@dataclass
class ExperimentChain:
    cluster_id: str
    series: list[TrendSeries]
    stats: AlignStats = field(default_factory=AlignStats)
    label: str = ""


def align_chain(records: Sequence[ExperimentRecord], cluster_id: str = "", label: str = "") -> ExperimentChain:
    """Group observations by (metric, dataset, direction) and place them in time.

    A cited baseline is dated by its reference, anything else by the host
    paper. Repeated (model, year) reports collapse to the better value; a
    year with several models keeps the best one and lists the rest as
    alternatives, so each series has one point per year.
    """
    stats = AlignStats()
    groups: dict[tuple[str, str, Direction], list[tuple[int, MetricObservation]]] = {}
    for rec in records:
        for obs in rec.observations:
            stats.total += 1
            year = rec.year_of(obs.model)
            if not math.isfinite(obs.value) or not YEAR_MIN <= year <= YEAR_MAX:
                stats.skipped += 1
                continue
            key = (obs.metric.casefold(), obs.dataset.casefold(), obs.direction)
            groups.setdefault(key, []).append((year, obs))
    if not groups:
        raise EmptyChain("no observations to align")

    series = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2].value)):
        items = sorted(groups[key], key=lambda yo: (yo[0], yo[1].model, yo[1].source))
        direction = key[2]
        first = min(items, key=lambda yo: yo[1].source)[1]

        per_model: dict[tuple[int, str], list[MetricObservation]] = {}
        for year, obs in items:
            per_model.setdefault((year, obs.model), []).append(obs)
        candidates: dict[int, list[tuple[str, float, list[Provenance]]]] = {}
        for (year, model), obs_list in per_model.items():
            best = obs_list[0]
            for o in obs_list[1:]:
                if direction.better(o.value, best.value):
                    best = o
            stats.deduped += len(obs_list) - 1
            provs = [best.source] + sorted(o.source for o in obs_list if o is not best)
            candidates.setdefault(year, []).append((model, best.value, provs))

        points = []
        for year in sorted(candidates):
            cands = candidates[year]
            winner = cands[0]
            for c in cands[1:]:
                if direction.better(c[1], winner[1]) or (c[1] == winner[1] and c[0] < winner[0]):
                    winner = c
            others = [c for c in cands if c is not winner]
            stats.deduped += len(others)
            stats.kept += 1
            points.append(TrendPoint(
                year=year,
                model=winner[0],
                value=winner[1],
                provenance=winner[2],
                alternatives=[
                    {"model": m, "value": v, "provenance": [p.as_dict() for p in provs]}
                    for m, v, provs in sorted(others, key=lambda c: c[0])
                ],
            ))
        series.append(TrendSeries(first.metric, first.dataset, direction, points))
    return ExperimentChain(cluster_id=cluster_id, series=series, stats=stats, label=label or cluster_id)


def chain_to_dict(chain: ExperimentChain) -> dict:
    return {
        "cluster_id": chain.cluster_id,
        "label": chain.label,
        "series": [
            {
                "metric": s.metric,
                "dataset": s.dataset,
                "direction": s.direction.value,
                "points": [
                    {
                        "year": p.year,
                        "model": p.model,
                        "value": p.value,
                        "provenance": [q.as_dict() for q in p.provenance],
                        "alternatives": p.alternatives,
                    }
                    for p in s.points
                ],
            }
            for s in chain.series
        ],
        "stats": {
            "total": chain.stats.total,
            "kept": chain.stats.kept,
            "deduped": chain.stats.deduped,
            "skipped": chain.stats.skipped,
        },
    }


def chain_to_json(chain: ExperimentChain) -> str:
    return json.dumps(chain_to_dict(chain), indent=2, ensure_ascii=False) + "\n"


# -- chart ----------------------------------------------------------------

@dataclass
class SeriesSpec:
    label: str
    direction: Direction
    points: list[tuple[int, float, str]]  # (year, value, model)


@dataclass
class ChartSpec:
    title: str
    x_ticks: list[int]
    y_label: str
    y_range: tuple[float, float]
    series: list[SeriesSpec]


def build_chart_spec(chain: ExperimentChain, title: str | None = None) -> ChartSpec:
    if not chain.series or not any(s.points for s in chain.series):
        raise EmptyChain("chain has no series to chart")
    years = [p.year for s in chain.series for p in s.points]
    values = [p.value for s in chain.series for p in s.points]
    lo, hi = min(values), max(values)
    scale = max(abs(lo), abs(hi), 1.0)
    # spans below float resolution of the values are drawn as flat
    span = hi - lo if hi - lo > scale * 1e-9 else scale
    labels = []
    for s in chain.series:
        tag = f"{s.metric} {s.direction.arrow}"
        if tag not in labels:
            labels.append(tag)
    multi_metric = len({s.metric for s in chain.series}) > 1
    series = []
    for s in chain.series:
        name = s.metric if multi_metric or s.dataset == DEFAULT_DATASET else s.dataset
        if multi_metric and s.dataset != DEFAULT_DATASET:
            name = f"{s.metric} ({s.dataset})"
        series.append(SeriesSpec(name, s.direction, [(p.year, p.value, p.model) for p in s.points]))
    return ChartSpec(
        title=title or chain.label or chain.cluster_id,
        x_ticks=year_ticks(min(years), max(years)),
        y_label=" / ".join(labels),
        y_range=(lo - 0.05 * span, hi + 0.05 * span),
        series=series,
    )


MAX_YEAR_TICKS = 12


def year_ticks(first: int, last: int) -> list[int]:
    """Evenly spaced years from ``first`` that reach at least ``last``."""
    step = next(m for m in (1, 2, 5, 10, 20, 25, 50) if -(-(last - first) // m) + 1 <= MAX_YEAR_TICKS)
    ticks = list(range(first, last + 1, step))
    if ticks[-1] < last:
        ticks.append(ticks[-1] + step)
    return ticks


def nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    raw = (hi - lo) / target
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    # index-based so large offsets do not accumulate drift
    digits = max(10, 3 - math.floor(math.log10(step)))
    ticks = [float(round(i * step, digits)) for i in range(math.ceil(lo / step), math.floor(hi / step) + 1)]
    return [t for t in ticks if lo <= t <= hi] or [lo, hi]


def _tick_label(v: float, ticks: list[float]) -> str:
    step = ticks[1] - ticks[0] if len(ticks) > 1 else 1.0
    decimals = max(0, -math.floor(math.log10(step))) if step < 1 else 0
    if decimals == 0 and any(abs(t - round(t)) > 1e-9 for t in ticks):
        decimals = 1
    return f"{v:.{decimals}f}"


STROKES = ("#000000", "#555555", "#888888", "#2a2a2a", "#6f6f6f", "#a0a0a0")
DASHES = (None, "6 3", "2 2", "8 3 2 3", "4 4", None)
SHAPES = ("circle", "square", "triangle", "diamond")

WIDTH, HEIGHT = 800.0, 480.0
LEFT, RIGHT, TOP, BOTTOM = 72.0, 200.0, 48.0, 56.0


def validate_spec(spec: ChartSpec) -> None:
    lo, hi = spec.y_range
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
        raise InvalidValue(f"invalid y range {spec.y_range!r}")
    if not spec.x_ticks:
        raise InvalidValue("no x ticks")
    for s in spec.series:
        for year, value, _ in s.points:
            if not math.isfinite(value):
                raise InvalidValue(f"non-finite value in series {s.label!r}")
            if not lo < value < hi:
                raise InvalidValue(f"value {value} outside y range in series {s.label!r}")
            if not spec.x_ticks[0] <= year <= spec.x_ticks[-1]:
                raise InvalidValue(f"year {year} outside x ticks in series {s.label!r}")


def linechart_scene(spec: ChartSpec) -> Scene:
    validate_spec(spec)
    x0, x1 = LEFT, WIDTH - RIGHT
    y0, y1 = TOP, HEIGHT - BOTTOM
    ymin, ymax = spec.y_range
    xmin, xmax = spec.x_ticks[0] - 0.5, spec.x_ticks[-1] + 0.5

    def sx(year: float) -> float:
        return x0 + (year - xmin) / (xmax - xmin) * (x1 - x0)

    def sy(v: float) -> float:
        return y1 - (v - ymin) / (ymax - ymin) * (y1 - y0)

    scene = Scene(WIDTH, HEIGHT, title=spec.title)
    scene.add(Text(WIDTH / 2, 28, spec.title, size=15, anchor="middle", weight="bold"))
    yt = nice_ticks(ymin, ymax)
    for t in yt:
        scene.add(
            Line(x0, sy(t), x1, sy(t), stroke="#dddddd", stroke_width=0.8, dash="3 3"),
            Line(x0 - 5, sy(t), x0, sy(t)),
            Text(x0 - 8, sy(t) + 4, _tick_label(t, yt), size=11, anchor="end"),
        )
    for year in spec.x_ticks:
        scene.add(
            Line(sx(year), y1, sx(year), y1 + 5),
            Text(sx(year), y1 + 20, str(year), size=11, anchor="middle"),
        )
    scene.add(
        Line(x0, y1, x1, y1, stroke_width=1.2),
        Line(x0, y0, x0, y1, stroke_width=1.2),
        Text((x0 + x1) / 2, HEIGHT - 12, "Year", size=12, anchor="middle"),
        Text(14, y0 - 14, spec.y_label, size=12),
    )
    for i, s in enumerate(spec.series):
        stroke, dash, shape = STROKES[i % len(STROKES)], DASHES[i % len(DASHES)], SHAPES[i % len(SHAPES)]
        pts = [(sx(year), sy(v)) for year, v, _ in s.points]
        if len(pts) > 1:
            scene.add(Polyline(tuple(pts), stroke=stroke, stroke_width=2.0, dash=dash))
        for (px, py), (_, v, model) in zip(pts, s.points):
            scene.add(
                Marker(px, py, shape=shape, size=4.0, fill=stroke),
                Text(px, py - 9, model, size=9, anchor="middle", fill="#333333"),
            )
    lx, ly = x1 + 20, y0 + 4
    scene.add(Rect(lx - 8, ly - 8, RIGHT - 28, 22 * len(spec.series) + 8, fill="#ffffff", stroke="#999999"))
    for i, s in enumerate(spec.series):
        stroke, dash, shape = STROKES[i % len(STROKES)], DASHES[i % len(DASHES)], SHAPES[i % len(SHAPES)]
        cy = ly + 8 + 22 * i
        scene.add(
            Line(lx, cy, lx + 28, cy, stroke=stroke, stroke_width=2.0, dash=dash),
            Marker(lx + 14, cy, shape=shape, size=3.5, fill=stroke),
            Text(lx + 36, cy + 4, f"{s.label} {s.direction.arrow}", size=11),
        )
    return scene


def render_linechart(spec: ChartSpec, raster_size: tuple[int, int] = DEFAULT_RASTER) -> Figure:
    return render_scene(linechart_scene(spec), raster_size)

