"""Monthly activity aggregation and survival observation assembly."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

from .events import DeprecationLabel, EventKind, EventRecord
from .metrics import NormalizedCentrality, sentinel_z

COUNT_COLUMNS = ["commits", "comments", "issues", "prs", "stars", "tags"]
CENTRALITY_COLUMNS = ["weight", "weight_pct", "weight_z"]
FEATURE_NAMES = COUNT_COLUMNS + CENTRALITY_COLUMNS
N_FEATURES = len(FEATURE_NAMES)

_KIND_COLUMN = {
    EventKind.PUSH: "commits",
    EventKind.COMMENT: "comments",
    EventKind.ISSUE_OPENED: "issues",
    EventKind.PR_OPENED: "prs",
    EventKind.STAR: "stars",
    EventKind.TAG_CREATED: "tags",
}


def aggregate_monthly(events: Sequence[EventRecord]) -> pd.DataFrame:
    """Per-(repo, month) activity counts.

    Every month between a repo's first and last event gets a row, zero-filled
    where nothing happened.
    """
    cols = ["repo", "month", *COUNT_COLUMNS]
    if not events:
        return pd.DataFrame({c: pd.Series(dtype=object if c == "repo" else np.int64) for c in cols})
    repo = [e.repo for e in events]
    month = np.fromiter((e.month for e in events), np.int64, len(events))
    raw = pd.DataFrame({"repo": repo, "month": month})
    for col in COUNT_COLUMNS:
        raw[col] = 0
    for kind, col in _KIND_COLUMN.items():
        mask = np.fromiter((e.kind is kind for e in events), bool, len(events))
        if kind is EventKind.PUSH:
            sizes = np.fromiter((e.commit_count for e in events), np.int64, len(events))
            raw.loc[mask, col] = sizes[mask]
        else:
            raw.loc[mask, col] = 1
    summed = raw.groupby(["repo", "month"], sort=True)[COUNT_COLUMNS].sum()

    spans = raw.groupby("repo")["month"].agg(["min", "max"]).sort_index()
    full_repo = np.repeat(spans.index.to_numpy(), (spans["max"] - spans["min"] + 1).to_numpy())
    full_month = np.concatenate([np.arange(lo, hi + 1) for lo, hi in zip(spans["min"], spans["max"])])
    full = pd.MultiIndex.from_arrays([full_repo, full_month], names=["repo", "month"])
    out = summed.reindex(full, fill_value=0).reset_index()
    out[COUNT_COLUMNS] = out[COUNT_COLUMNS].astype(np.int64)
    return out[cols]


def centrality_frame(triples_by_month: Sequence[Mapping[str, NormalizedCentrality]]) -> pd.DataFrame:
    rows = [
        (c.month, repo, c.weight, c.weight_pct, c.weight_z)
        for triples in triples_by_month
        for repo, c in triples.items()
    ]
    return pd.DataFrame(rows, columns=["month", "repo", *CENTRALITY_COLUMNS])


def join_centrality(counts: pd.DataFrame, centrality: pd.DataFrame) -> pd.DataFrame:
    """Left-join centrality onto counts.

    Rows without a centrality entry get weight 0, percentile 0 and the
    month's zero-weight z sentinel.
    """
    out = counts.merge(centrality, on=["repo", "month"], how="left")
    if out.empty:
        return out.reindex(columns=["repo", "month", *FEATURE_NAMES])
    missing = out["weight"].isna()
    if missing.any():
        positive = centrality[centrality["weight"] > 0]
        sentinels = positive.groupby("month")["weight_z"].min() - 1.0
        fill_z = out.loc[missing, "month"].map(sentinels).fillna(sentinel_z([]))
        out.loc[missing, "weight"] = 0.0
        out.loc[missing, "weight_pct"] = 0.0
        out.loc[missing, "weight_z"] = fill_z
    out[CENTRALITY_COLUMNS] = out[CENTRALITY_COLUMNS].astype(float)
    return out[["repo", "month", *FEATURE_NAMES]].sort_values(["repo", "month"], kind="stable").reset_index(drop=True)


def write_features_csv(table: pd.DataFrame, path: str | Path) -> None:
    table.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def read_features_csv(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"repo": str}, float_precision="round_trip")


@dataclass(frozen=True)
class Observation:
    repo: str
    obs_month: int
    x: np.ndarray
    duration_months: float
    event: bool


class ObservationSet:
    """Column-oriented batch of observations (one row per repo-month)."""

    def __init__(self, repos, obs_month, x, duration, event, window: int = 1):
        self.repos = np.asarray(repos, dtype=object)
        self.obs_month = np.asarray(obs_month, dtype=np.int64)
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            x = x.reshape(len(self.repos), -1) if len(self.repos) else x.reshape(0, 0)
        self.x = x
        self.duration = np.asarray(duration, dtype=float)
        self.event = np.asarray(event, dtype=bool)
        self.window = window

    def __len__(self) -> int:
        return len(self.repos)

    def __iter__(self) -> Iterator[Observation]:
        for i in range(len(self)):
            yield Observation(self.repos[i], int(self.obs_month[i]), self.x[i], float(self.duration[i]), bool(self.event[i]))

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def subset(self, mask) -> "ObservationSet":
        return ObservationSet(self.repos[mask], self.obs_month[mask], self.x[mask],
                              self.duration[mask], self.event[mask], self.window)

    def with_x(self, x: np.ndarray) -> "ObservationSet":
        return ObservationSet(self.repos, self.obs_month, x, self.duration, self.event, self.window)

    def columns(self, names: Sequence[str]) -> "ObservationSet":
        """Keep only the named features (in every window row)."""
        return self.with_x(self.x[:, feature_columns(names, self.window)])

    @classmethod
    def from_observations(cls, observations: Sequence[Observation], window: int = 1) -> "ObservationSet":
        k = len(observations[0].x) if observations else 0
        return cls(
            [o.repo for o in observations],
            [o.obs_month for o in observations],
            np.array([o.x for o in observations], dtype=float).reshape(len(observations), k),
            [o.duration_months for o in observations],
            [o.event for o in observations],
            window,
        )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["repo", "obs_month", *(f"x{i}" for i in range(self.n_features)), "duration", "event"])
            for i in range(len(self)):
                w.writerow([
                    self.repos[i], int(self.obs_month[i]),
                    *(repr(v) for v in self.x[i].tolist()),
                    repr(float(self.duration[i])), int(self.event[i]),
                ])

    @classmethod
    def from_csv(cls, path: str | Path) -> "ObservationSet":
        df = pd.read_csv(path, dtype={"repo": str}, float_precision="round_trip")
        xcols = [c for c in df.columns if c.startswith("x") and c[1:].isdigit()]
        if "duration" not in df or "event" not in df or not xcols:
            raise ValueError(f"{path}: not an observation table")
        k = len(xcols)
        window = k // N_FEATURES if k % N_FEATURES == 0 and k else 1
        return cls(df["repo"].to_numpy(), df["obs_month"].to_numpy(), df[xcols].to_numpy(float),
                   df["duration"].to_numpy(float), df["event"].to_numpy().astype(bool), window)


def feature_columns(names: Sequence[str], window: int = 1) -> list[int]:
    """Column indices of ``names`` in a flattened window, oldest row first."""
    idx = [FEATURE_NAMES.index(n) for n in names]
    return [row * N_FEATURES + j for row in range(window) for j in idx]


def make_observations(
    features: pd.DataFrame,
    labels: Mapping[str, DeprecationLabel],
    window: int = 1,
    stride: int = 1,
) -> ObservationSet:
    """One observation per eligible (repo, month).

    An observation month needs ``window`` consecutive feature rows ending at
    it and must fall strictly before the deprecation/censoring month.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    repos, months, xs, durations, events = [], [], [], [], []
    for repo, group in features.groupby("repo", sort=True):
        label = labels.get(repo)
        if label is None:
            continue
        group = group.sort_values("month")
        m = group["month"].to_numpy()
        vals = group[FEATURE_NAMES].to_numpy(float)
        end = label.end_month
        # Consecutive-run start for each row, to test window contiguity.
        run_start = np.zeros(len(m), dtype=np.int64)
        for i in range(1, len(m)):
            run_start[i] = run_start[i - 1] if m[i] == m[i - 1] + 1 else i
        first_ok = None
        for i in range(window - 1, len(m)):
            if m[i] >= end:
                break
            if i - run_start[i] + 1 < window:
                continue
            if first_ok is None:
                first_ok = m[i]
            if (m[i] - first_ok) % stride:
                continue
            repos.append(repo)
            months.append(int(m[i]))
            xs.append(vals[i - window + 1: i + 1].ravel())
            durations.append(float(end - m[i]))
            events.append(label.deprecated)
    k = window * N_FEATURES
    x = np.array(xs, dtype=float).reshape(len(xs), k)
    return ObservationSet(repos, months, x, durations, events, window)


def split_by_repo(obs: ObservationSet, test_fraction: float = 0.2, seed: int = 0):
    """Seeded repository-level train/test split; no repo lands in both."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    unique = np.array(sorted(set(obs.repos.tolist())), dtype=object)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(unique))
    n_test = max(1, int(math.ceil(test_fraction * len(unique)))) if len(unique) > 1 else 0
    test_repos = set(unique[perm[:n_test]].tolist())
    is_test = np.fromiter((r in test_repos for r in obs.repos), bool, len(obs))
    return obs.subset(~is_test), obs.subset(is_test)
