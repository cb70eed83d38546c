"""End-to-end helpers: event log -> centrality -> features -> observations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import pandas as pd

from .events import DEFAULT_KEYWORDS, DeprecationLabel, EventRecord, label_all
from .features import (
    ObservationSet,
    aggregate_monthly,
    centrality_frame,
    join_centrality,
    make_observations,
)
from .graph import DEFAULT_MAX_ITER, DEFAULT_TOL, CentralityScores, FirstStarTable, hits
from .metrics import NormalizedCentrality, centrality_triple


def month_span(events: Sequence[EventRecord]) -> range:
    if not events:
        return range(0)
    months = [e.month for e in events]
    return range(min(months), max(months) + 1)


def monthly_centrality(
    events: Sequence[EventRecord],
    months: Sequence[int] | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    threads: int = 1,
) -> tuple[list[CentralityScores], list[dict[str, NormalizedCentrality]]]:
    months = month_span(events) if months is None else months
    table = FirstStarTable(events)
    scores = [hits(table.snapshot(m), tol, max_iter, threads) for m in months]
    return scores, [centrality_triple(s) for s in scores]


@dataclass
class PipelineData:
    events: list[EventRecord]
    scores: list[CentralityScores]
    features: pd.DataFrame
    labels: dict[str, DeprecationLabel]

    def observations(self, window: int = 1, stride: int = 1) -> ObservationSet:
        return make_observations(self.features, self.labels, window, stride)


def run_pipeline(
    events: Sequence[EventRecord],
    descriptions: Mapping[str, str] | None = None,
    keywords: Sequence[str] = DEFAULT_KEYWORDS,
    horizon_end: int | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    threads: int = 1,
) -> PipelineData:
    events = sorted(events, key=lambda e: e.timestamp)
    scores, triples = monthly_centrality(events, None, tol, max_iter, threads)
    features = join_centrality(aggregate_monthly(events), centrality_frame(triples))
    labels = label_all(events, dict(descriptions or {}), keywords, horizon_end)
    return PipelineData(list(events), scores, features, labels)
