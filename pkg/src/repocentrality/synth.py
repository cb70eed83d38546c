"""Seeded synthetic OSS ecosystems with planted ground truth.

Every random draw comes from a generator keyed by ``(seed, month, stream)``
(or ``(seed, stream)`` for static draws), so a month's output does not
depend on how many numbers earlier months consumed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from datetime import timedelta
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .events import EventKind, EventRecord, month_start
from .graph import BipartiteSnapshot, hits

_STREAMS = {
    "static": 0, "noise": 1, "stars": 2, "stargazers": 3, "push": 4, "push_size": 5,
    "issues": 6, "prs": 7, "comments": 8, "tags": 9, "hazard": 10, "clock": 11, "signal": 12,
}

DEFAULT_RATES = {"stars": 1.0, "pushes": 1.5, "issues": 0.4, "prs": 0.3, "comments": 0.8, "tags": 0.1}
_RATE_KIND = {
    "pushes": EventKind.PUSH, "issues": EventKind.ISSUE_OPENED, "prs": EventKind.PR_OPENED,
    "comments": EventKind.COMMENT, "tags": EventKind.TAG_CREATED,
}
_KIND_ORDER = {k: i for i, k in enumerate(EventKind)}

KEYWORD_DESCRIPTION = "This project is no longer maintained. Please use a fork."
PLAIN_DESCRIPTION = "A small library for everyday tasks."


class SynthConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    n_users: int = 6000
    n_repos: int = 2000
    n_months: int = 48
    attachment_exponent: float = 0.3
    vitality_decay: float = 0.9
    hazard_link: float = 0.6
    activity_rates: dict = field(default_factory=lambda: dict(DEFAULT_RATES))
    seed: int = 0
    start_month: int = 48
    vitality_noise: float = 0.3
    vitality_spread: float = 1.0
    # Authority share (in units of 1/sqrt(n_repos)) at which the linked
    # hazard has fallen to 1/e of its peak.
    vitality_threshold: float = 1.0
    base_hazard: float = 0.005
    min_age: int = 6
    birth_span: float = 0.9
    user_join_span: float = 1.0
    user_activity_shape: float = 0.8
    keyword_fraction: float = 0.2
    # Months between abandonment and the archive/keyword event, and the
    # factor applied to the abandoned repo's vitality meanwhile.
    abandon_lag: int = 5
    abandon_factor: float = 0.1
    abandon_scope: str = "stars"  # "stars" or "all"

    def __post_init__(self):
        self.activity_rates = {**DEFAULT_RATES, **dict(self.activity_rates)}
        self.validate()

    def validate(self) -> None:
        if self.n_users < 0 or self.n_repos < 0:
            raise SynthConfigError("n_users and n_repos must be nonnegative")
        if self.n_repos > 0 and self.n_users < 1:
            raise SynthConfigError("need at least one user when there are repos")
        if self.n_months < 2:
            raise SynthConfigError("n_months must be >= 2")
        if not 0 < self.vitality_decay < 1:
            raise SynthConfigError("vitality_decay must lie in (0, 1)")
        if any(v < 0 for v in self.activity_rates.values()):
            raise SynthConfigError("activity rates must be nonnegative")
        unknown = set(self.activity_rates) - set(DEFAULT_RATES)
        if unknown:
            raise SynthConfigError(f"unknown activity rates {sorted(unknown)}")
        if self.hazard_link < 0 or self.base_hazard < 0 or self.base_hazard + self.hazard_link > 1:
            raise SynthConfigError("hazards must be nonnegative with base_hazard + hazard_link <= 1")
        if self.start_month < 0:
            raise SynthConfigError("start_month must be >= 0")
        if not 0 <= self.keyword_fraction <= 1:
            raise SynthConfigError("keyword_fraction must lie in [0, 1]")
        if self.vitality_threshold <= 0:
            raise SynthConfigError("vitality_threshold must be positive")
        if self.abandon_lag < 0 or not 0 <= self.abandon_factor <= 1:
            raise SynthConfigError("abandon_lag must be >= 0 and abandon_factor in [0, 1]")
        if self.abandon_scope not in ("stars", "all"):
            raise SynthConfigError("abandon_scope must be 'stars' or 'all'")

    @classmethod
    def from_mapping(cls, values: Mapping) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise SynthConfigError(f"unknown synth config keys {sorted(unknown)}")
        return cls(**dict(values))


@dataclass
class RepoTruth:
    repo: str
    birth_month: int
    deprecation_month: int | None
    mechanism: str  # "archived", "keyword" or "alive"
    v0: float
    description: str


@dataclass
class SynthResult:
    events: list[EventRecord]
    truth: dict[str, RepoTruth]
    vitality: pd.DataFrame  # repo, month, vitality, auth

    @property
    def descriptions(self) -> dict[str, str]:
        return {r: t.description for r, t in self.truth.items()}


def _rng(seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *key]))


def repo_name(i: int) -> str:
    return f"org{i % 97:02d}/repo{i:05d}"


def user_name(i: int) -> str:
    return f"user{i:06d}"


class _Clock:
    """Random in-month timestamps; deprecation events land last in the month."""

    def __init__(self, month: int, rng: np.random.Generator):
        self.base = month_start(month)
        self.rng = rng

    def draw(self, n: int) -> list:
        secs = self.rng.integers(0, 27 * 86400, size=n)
        return [self.base + timedelta(seconds=int(s)) for s in secs]

    def end_of_month(self, offset: int = 0):
        return self.base + timedelta(days=27, hours=23, minutes=59, seconds=min(offset, 59))


def generate(config: SynthConfig) -> SynthResult:
    """Simulate a star network plus activity streams month by month.

    Each repo has a latent vitality ``v0 * decay**age * noise``. Monthly new
    stars are Poisson with mean ``rate * v * (1 + stars)**exponent``, with
    stargazers drawn in proportion to a heavy-tailed user activity; the other
    event kinds are Poisson with mean ``rate * v``. HITS authority is
    recomputed on the cumulative star graph after every month.

    A live repo of age >= ``min_age`` is abandoned with probability
    ``base_hazard + hazard_link * exp(-a / threshold)``, ``a`` being last
    month's authority in units of ``1 / sqrt(n_repos)``. Abandonment scales
    the star rate (or all activity) by ``abandon_factor``, and the repo is
    archived or marked with a deprecation keyword ``abandon_lag`` months on.
    """
    config.validate()
    cfg = config
    n_r, n_u, T = cfg.n_repos, cfg.n_users, cfg.n_months
    if n_r == 0:
        return SynthResult([], {}, pd.DataFrame(columns=["repo", "month", "vitality", "auth"]))
    static = _rng(cfg.seed, _STREAMS["static"])
    v0 = np.exp(static.normal(0.0, cfg.vitality_spread, n_r))
    birth = np.sort(static.integers(0, max(1, int(cfg.birth_span * T)), n_r))
    user_join = np.sort(static.integers(0, max(1, int(cfg.user_join_span * T)), n_u))
    user_join[: max(1, n_u // 20)] = 0  # a founding cohort
    user_act = static.pareto(cfg.user_activity_shape, n_u) + 1.0
    keyword_draw = static.random(n_r)
    scale = math.sqrt(n_r)

    stars_so_far = np.zeros(n_r)
    dep_month = np.full(n_r, -1)
    abandon_at = np.full(n_r, -1)
    seen_edges: set[int] = set()
    edge_u: list[int] = []
    edge_r: list[int] = []
    events: list[tuple] = []
    vit_rows = []
    auth = np.zeros(n_r)
    prev_auth = np.zeros(n_r)
    users_tbl = tuple(user_name(i) for i in range(n_u))
    repos_tbl = tuple(repo_name(i) for i in range(n_r))

    def emit(kind, r, users, stamps, sizes=None):
        for k in range(len(stamps)):
            events.append((stamps[k], int(r), _KIND_ORDER[kind], kind, users[k],
                           1 if sizes is None else int(sizes[k])))

    for t in range(T):
        month = cfg.start_month + t
        clock = _Clock(month, _rng(cfg.seed, month, _STREAMS["clock"]))
        active = (birth <= t) & (dep_month < 0)
        age = np.maximum(t - birth, 0)
        noise = np.exp(_rng(cfg.seed, month, _STREAMS["noise"]).normal(0.0, cfg.vitality_noise, n_r))
        vit = np.where(active, v0 * cfg.vitality_decay ** age * noise, 0.0)
        drained = np.where(abandon_at >= 0, vit * cfg.abandon_factor, vit)
        if cfg.abandon_scope == "all":
            vit = drained

        star_mean = cfg.activity_rates["stars"] * drained * (1.0 + stars_so_far) ** cfg.attachment_exponent
        n_stars = _rng(cfg.seed, month, _STREAMS["stars"]).poisson(star_mean)
        joined = np.flatnonzero(user_join <= t)
        cdf = np.cumsum(user_act[joined])
        cdf /= cdf[-1]
        gaz_rng = _rng(cfg.seed, month, _STREAMS["stargazers"])
        counts = {}
        for name, stream in (("pushes", "push"), ("issues", "issues"), ("prs", "prs"),
                             ("comments", "comments"), ("tags", "tags")):
            counts[name] = _rng(cfg.seed, month, _STREAMS[stream]).poisson(cfg.activity_rates[name] * vit)
        newborn = active & (birth == t)
        counts["pushes"] = np.where(newborn, np.maximum(counts["pushes"], 1), counts["pushes"])
        size_rng = _rng(cfg.seed, month, _STREAMS["push_size"])

        for r in np.flatnonzero(active):
            k = int(n_stars[r])
            if k:
                picks = joined[np.minimum(np.searchsorted(cdf, gaz_rng.random(k)), len(joined) - 1)]
                emit(EventKind.STAR, r, [users_tbl[u] for u in picks], clock.draw(k))
                for u in picks.tolist():
                    key = u * n_r + int(r)
                    if key not in seen_edges:
                        seen_edges.add(key)
                        edge_u.append(u)
                        edge_r.append(int(r))
            actor = users_tbl[int(r) % n_u]
            for name, kind in _RATE_KIND.items():
                c = int(counts[name][r])
                if c:
                    sizes = 1 + size_rng.poisson(1.5, c) if kind is EventKind.PUSH else None
                    emit(kind, r, [actor] * c, clock.draw(c), sizes)
        stars_so_far += n_stars * active

        if edge_u:
            snap = BipartiteSnapshot.from_edges(month, users_tbl, repos_tbl, np.array(edge_u), np.array(edge_r))
            auth = hits(snap).auth
        # Abandonment this month only sees authority up to the previous month.
        rel = prev_auth * scale
        p = cfg.base_hazard + cfg.hazard_link * np.exp(-rel / cfg.vitality_threshold)
        u = _rng(cfg.seed, month, _STREAMS["hazard"]).random(n_r)
        leaving = active & (abandon_at < 0) & (age >= cfg.min_age) & (u < p)
        abandon_at[leaving] = t
        dying = active & (abandon_at >= 0) & (t - abandon_at >= cfg.abandon_lag)
        prev_auth = auth.copy()
        for r in np.flatnonzero(dying):
            dep_month[r] = month
            actor = users_tbl[int(r) % n_u]
            if keyword_draw[r] < cfg.keyword_fraction:
                emit(EventKind.PUSH, r, [actor], [clock.end_of_month()], [1])
            else:
                emit(EventKind.ARCHIVED, r, [actor], [clock.end_of_month()])
        vit_rows.append(pd.DataFrame({"repo": repos_tbl, "month": month, "vitality": vit, "auth": auth.copy()})[active])

    events.sort(key=lambda ev: ev[:3])
    records = [EventRecord(kind, user, repos_tbl[r], ts, size if kind is EventKind.PUSH else 0)
               for ts, r, _, kind, user, size in events]
    truth = {}
    for r in range(n_r):
        d = int(dep_month[r])
        if d < 0:
            mech, desc = "alive", PLAIN_DESCRIPTION
        elif keyword_draw[r] < cfg.keyword_fraction:
            mech, desc = "keyword", KEYWORD_DESCRIPTION
        else:
            mech, desc = "archived", PLAIN_DESCRIPTION
        truth[repos_tbl[r]] = RepoTruth(repos_tbl[r], cfg.start_month + int(birth[r]),
                                        d if d >= 0 else None, mech, float(v0[r]), desc)
    vitality = pd.concat(vit_rows, ignore_index=True) if vit_rows else pd.DataFrame()
    return SynthResult(records, truth, vitality)


def generate_planted_signal(
    n_repos: int = 600,
    n_months: int = 30,
    lead: int = 5,
    window: int = 10,
    signal_fraction: float = 0.5,
    seed: int = 0,
    start_month: int = 48,
    n_users: int = 400,
) -> SynthResult:
    """Steady activity everywhere; a subset of repos gets one tag-release
    burst and is archived exactly ``lead`` months later.

    Signal months are chosen so every burst has ``window`` months of history.
    """
    if lead < 1 or window < 1:
        raise SynthConfigError("lead and window must be >= 1")
    if n_months < window + lead + 1:
        raise SynthConfigError("n_months too short for window + lead")
    static = _rng(seed, _STREAMS["static"])
    has_signal = static.random(n_repos) < signal_fraction
    signal_month = static.integers(window - 1, n_months - lead - 1, n_repos)
    users_tbl = [user_name(i) for i in range(n_users)]
    rates = {"pushes": 2.0, "issues": 0.5, "prs": 0.3, "comments": 1.0, "tags": 0.05}
    events: list[tuple] = []
    truth = {}
    for t in range(n_months):
        month = start_month + t
        clock = _Clock(month, _rng(seed, month, _STREAMS["clock"]))
        crng = _rng(seed, month, _STREAMS["push"])
        srng = _rng(seed, month, _STREAMS["stargazers"])
        for r in range(n_repos):
            if has_signal[r] and t > signal_month[r] + lead:
                continue
            name = repo_name(r)
            if has_signal[r] and t == signal_month[r] + lead:
                events.append((clock.end_of_month(), r, _KIND_ORDER[EventKind.ARCHIVED], EventKind.ARCHIVED, users_tbl[0], 0))
                truth[name] = RepoTruth(name, start_month, month, "archived", 1.0, PLAIN_DESCRIPTION)
                continue
            for rname, kind in _RATE_KIND.items():
                c = int(crng.poisson(rates[rname])) + (1 if t == 0 and kind is EventKind.PUSH else 0)
                if has_signal[r] and t == signal_month[r] and kind is EventKind.TAG_CREATED:
                    c += 12
                for ts in clock.draw(c):
                    events.append((ts, r, _KIND_ORDER[kind], kind, users_tbl[r % n_users], 1))
            for _ in range(int(crng.poisson(1.0))):
                u = users_tbl[int(srng.integers(n_users))]
                events.append((clock.draw(1)[0], r, _KIND_ORDER[EventKind.STAR], EventKind.STAR, u, 1))
    for r in range(n_repos):
        truth.setdefault(repo_name(r), RepoTruth(repo_name(r), start_month, None, "alive", 1.0, PLAIN_DESCRIPTION))
    events.sort(key=lambda ev: ev[:3])
    records = [EventRecord(kind, user, repo_name(r), ts, size if kind is EventKind.PUSH else 0)
               for ts, r, _, kind, user, size in events]
    sig = pd.DataFrame({"repo": [repo_name(r) for r in range(n_repos)],
                        "signal_month": np.where(has_signal, signal_month + start_month, -1)})
    return SynthResult(records, truth, sig)


def write_truth_csv(truth: Mapping[str, RepoTruth], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["repo", "deprecation_month", "mechanism", "v0"])
        for repo in sorted(truth):
            t = truth[repo]
            w.writerow([repo, "alive" if t.deprecation_month is None else t.deprecation_month, t.mechanism, repr(t.v0)])


def write_descriptions_csv(truth: Mapping[str, RepoTruth], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["repo", "description"])
        for repo in sorted(truth):
            w.writerow([repo, truth[repo].description])
