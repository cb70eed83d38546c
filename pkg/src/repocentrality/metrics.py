"""Percentile and log z-score normalization of HITS authority weights."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy.stats import rankdata

from .graph import CentralityScores

# Below this the log-weights are treated as constant.
SIGMA_EPS = 1e-12


@dataclass(frozen=True)
class NormalizedCentrality:
    month: int
    weight: float
    weight_pct: float
    weight_z: float
    population_mu: float
    population_sigma: float


def rank_normalize(weights: Mapping[str, float]) -> dict[str, float]:
    """Ascending 1-based rank over the population size; ties share the mean rank."""
    if not weights:
        raise ValueError("rank_normalize needs at least one weight")
    keys = list(weights)
    ranks = rankdata(np.fromiter(weights.values(), float, len(keys)), method="average")
    n = len(keys)
    return {k: float(r) / n for k, r in zip(keys, ranks)}


def _log_stats(values: np.ndarray) -> tuple[np.ndarray, float, float]:
    logs = np.log(values)
    mu = float(np.mean(logs))
    sigma = float(np.std(logs))
    return logs, mu, sigma


def zscore_normalize(weights: Mapping[str, float]) -> dict[str, float]:
    z, _, _ = _zscore(weights)
    return z


def _zscore(weights: Mapping[str, float]) -> tuple[dict[str, float], float, float]:
    """z of ln(weight) over the positive weights.

    Zero weights have no logarithm; they are left out of mu/sigma and get
    one below the smallest included z (or -1 when nothing is included).
    """
    if not weights:
        raise ValueError("zscore_normalize needs at least one weight")
    keys = list(weights)
    w = np.fromiter(weights.values(), float, len(keys))
    if (w < 0).any():
        raise ValueError("weights must be nonnegative")
    pos = w > 0
    z = np.zeros(len(w))
    mu = sigma = 0.0
    if pos.any():
        logs, mu, sigma = _log_stats(w[pos])
        if sigma > SIGMA_EPS:
            z[pos] = (logs - mu) / sigma
        else:
            sigma = 0.0
    z[~pos] = sentinel_z(z[pos])
    return dict(zip(keys, z.tolist())), mu, sigma


def sentinel_z(included_z: Iterable[float]) -> float:
    included = list(included_z)
    return (min(included) if included else 0.0) - 1.0


def centrality_triple(scores: CentralityScores) -> dict[str, NormalizedCentrality]:
    weights = scores.auth_map()
    if not weights:
        return {}
    pct = rank_normalize(weights)
    z, mu, sigma = _zscore(weights)
    return {
        repo: NormalizedCentrality(scores.month, w, pct[repo], z[repo], mu, sigma)
        for repo, w in weights.items()
    }


CSV_HEADER = ["month", "repo", "weight", "weight_pct", "weight_z"]


def write_centrality_csv(
    triples_by_month: Iterable[Mapping[str, NormalizedCentrality]], path: str | Path
) -> int:
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for triples in triples_by_month:
            for repo, c in triples.items():
                w.writerow([c.month, repo, repr(float(c.weight)), repr(float(c.weight_pct)), repr(float(c.weight_z))])
                n += 1
    return n


def read_centrality_csv(path: str | Path) -> dict[tuple[str, int], tuple[float, float, float]]:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[(row["repo"], int(row["month"]))] = (
                float(row["weight"]), float(row["weight_pct"]), float(row["weight_z"]),
            )
    return out
