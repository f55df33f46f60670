"""Hypothesis strategies shared by the property and acceptance tests."""
from __future__ import annotations

import datetime as dt

from hypothesis import strategies as st

from pulsechain.docparse import Table
from pulsechain.lchart import Direction, ExperimentRecord, MetricObservation, Provenance
from pulsechain.mmap import MotivationMethodPair

doc_ids = st.text("abcdefgh0123_-", min_size=1, max_size=6)
dates = st.dates(dt.date(1990, 1, 1), dt.date(2030, 12, 31))
# any printable text on one line, including markdown punctuation
free_text = st.text(
    st.characters(blacklist_categories=("Cs", "Cc", "Zl", "Zp")), min_size=0, max_size=40
)
field_text = free_text.filter(lambda s: s.strip())


@st.composite
def pair_lists(draw, min_size=1, max_size=12):
    ids = draw(st.lists(doc_ids, min_size=min_size, max_size=max_size, unique=True))
    # a small date pool forces plenty of ties
    pool = draw(st.lists(dates, min_size=1, max_size=4))
    return [
        MotivationMethodPair(
            doc_id=i,
            motivation=draw(field_text),
            method=draw(field_text),
            published_at=draw(st.sampled_from(pool)),
            title=draw(free_text),
        )
        for i in ids
    ]


@st.composite
def experiment_records(draw, max_records=5):
    """Records over a few shared models, metrics and datasets."""
    models = ["A", "B", "C", "D"]
    metrics = ["Acc", "FID", "acc"]
    datasets = ["X", "Y", "x"]
    records = []
    n = draw(st.integers(1, max_records))
    for r in range(n):
        doc = f"p{r}"
        year = draw(st.integers(1995, 2025))
        baselines = draw(st.dictionaries(
            st.sampled_from(models),
            st.one_of(st.integers(1990, 2025), st.integers(1800, 1899)),
            max_size=2,
        ))
        obs = []
        for row in range(draw(st.integers(0, 6))):
            metric = draw(st.sampled_from(metrics))
            obs.append(MetricObservation(
                model=draw(st.sampled_from(models)),
                metric=metric,
                dataset=draw(st.sampled_from(datasets)),
                value=draw(st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)),
                direction=draw(st.sampled_from(list(Direction))),
                source=Provenance(doc, 0, row, 1),
            ))
        records.append(ExperimentRecord(
            doc, Table(None, ["Model", "v"], []), sorted({o.model for o in obs}), obs,
            baselines, dt.date(year, 6, 1),
        ))
    return records
