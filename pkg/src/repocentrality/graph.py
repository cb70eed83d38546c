"""Cumulative user->repository star snapshots and HITS centrality."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .events import EventKind, EventRecord

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100


def _csr(rows: np.ndarray, cols: np.ndarray, n_rows: int):
    """Row-major compressed adjacency with ascending columns within a row."""
    order = np.lexsort((cols, rows))
    counts = np.bincount(rows, minlength=n_rows)
    ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr, rows[order], cols[order], order


@dataclass(frozen=True, eq=False)
class BipartiteSnapshot:
    """Immutable star graph as of the end of ``month``.

    Both directions are materialized: ``user_ptr/user_adj`` lists each user's
    starred repos and ``repo_ptr/repo_adj`` each repo's stargazers, all sorted
    ascending by dense id.
    """

    month: int
    users: tuple[str, ...]
    repos: tuple[str, ...]
    user_ptr: np.ndarray
    user_adj: np.ndarray
    repo_ptr: np.ndarray
    repo_adj: np.ndarray
    edge_month: np.ndarray  # first-star month per edge, user-major order
    user_rows: np.ndarray = field(repr=False)  # user id per edge, user-major
    repo_rows: np.ndarray = field(repr=False)  # repo id per edge, repo-major

    @classmethod
    def from_edges(
        cls,
        month: int,
        users: Sequence[str],
        repos: Sequence[str],
        user_ids: np.ndarray,
        repo_ids: np.ndarray,
        edge_month: np.ndarray | None = None,
    ) -> "BipartiteSnapshot":
        user_ids = np.asarray(user_ids, dtype=np.int64)
        repo_ids = np.asarray(repo_ids, dtype=np.int64)
        if edge_month is None:
            edge_month = np.full(len(user_ids), month, dtype=np.int64)
        edge_month = np.asarray(edge_month, dtype=np.int64)
        n_users, n_repos = len(users), len(repos)
        if len(user_ids) and (
            user_ids.min() < 0 or user_ids.max() >= n_users
            or repo_ids.min() < 0 or repo_ids.max() >= n_repos
        ):
            raise ValueError("edge endpoint outside the id tables")
        u_ptr, u_rows, u_adj, u_order = _csr(user_ids, repo_ids, n_users)
        if len(u_rows) > 1:
            same = (u_rows[1:] == u_rows[:-1]) & (u_adj[1:] == u_adj[:-1])
            if same.any():
                raise ValueError("duplicate (user, repo) edges")
        r_ptr, r_rows, r_adj, _ = _csr(repo_ids, user_ids, n_repos)
        return cls(
            month=month,
            users=tuple(users),
            repos=tuple(repos),
            user_ptr=u_ptr,
            user_adj=u_adj,
            repo_ptr=r_ptr,
            repo_adj=r_adj,
            edge_month=edge_month[u_order],
            user_rows=u_rows,
            repo_rows=r_rows,
        )

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_repos(self) -> int:
        return len(self.repos)

    @property
    def n_edges(self) -> int:
        return len(self.user_adj)

    @cached_property
    def repo_index(self) -> dict[str, int]:
        return {r: i for i, r in enumerate(self.repos)}

    @cached_property
    def user_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.users)}

    def starred_by(self, user_id: int) -> np.ndarray:
        return self.user_adj[self.user_ptr[user_id]: self.user_ptr[user_id + 1]]

    def stargazers(self, repo_id: int) -> np.ndarray:
        return self.repo_adj[self.repo_ptr[repo_id]: self.repo_ptr[repo_id + 1]]

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(user_id, repo_id, first_star_month) arrays in user-major order."""
        return self.user_rows, self.user_adj, self.edge_month

    def to_csv(self, path: str | Path) -> None:
        users, repos, months = self.edges()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["user_id", "repo_id", "first_star_month"])
            for u, r, m in zip(users.tolist(), repos.tolist(), months.tolist()):
                w.writerow([self.users[u], self.repos[r], m])

    @classmethod
    def from_csv(cls, path: str | Path, month: int | None = None) -> "BipartiteSnapshot":
        users: dict[str, int] = {}
        repos: dict[str, int] = {}
        uid, rid, months = [], [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                m = int(row["first_star_month"])
                if month is not None and m > month:
                    continue
                uid.append(users.setdefault(row["user_id"], len(users)))
                rid.append(repos.setdefault(row["repo_id"], len(repos)))
                months.append(m)
        snap_month = month if month is not None else max(months, default=0)
        return cls.from_edges(snap_month, list(users), list(repos), np.array(uid), np.array(rid), np.array(months))


class FirstStarTable:
    """First star of every (user, repo) pair, in timestamp order.

    Later stars by the same user on the same repo are ignored (star removals
    never reach the event stream).
    """

    def __init__(self, events: Iterable[EventRecord]):
        stars = sorted(
            (e for e in events if e.kind is EventKind.STAR),
            key=lambda e: e.timestamp,
        )
        users: dict[str, int] = {}
        repos: dict[str, int] = {}
        seen: set[tuple[int, int]] = set()
        uid, rid, months = [], [], []
        for e in stars:
            u = users.setdefault(e.user, len(users))
            r = repos.setdefault(e.repo, len(repos))
            if (u, r) in seen:
                continue
            seen.add((u, r))
            uid.append(u)
            rid.append(r)
            months.append(e.month)
        self.users = list(users)
        self.repos = list(repos)
        self.user_ids = np.array(uid, dtype=np.int64)
        self.repo_ids = np.array(rid, dtype=np.int64)
        self.months = np.array(months, dtype=np.int64)

    def snapshot(self, month: int) -> BipartiteSnapshot:
        mask = self.months <= month
        u, r, m = self.user_ids[mask], self.repo_ids[mask], self.months[mask]
        # Global ids follow first appearance, so ascending order is preserved
        # by taking the used ids sorted and re-densifying.
        used_u = np.unique(u)
        used_r = np.unique(r)
        return BipartiteSnapshot.from_edges(
            month,
            [self.users[i] for i in used_u.tolist()],
            [self.repos[i] for i in used_r.tolist()],
            np.searchsorted(used_u, u),
            np.searchsorted(used_r, r),
            m,
        )


def build_snapshot(event_log: Sequence[EventRecord], month: int) -> BipartiteSnapshot:
    return FirstStarTable(event_log).snapshot(month)


@dataclass(frozen=True, eq=False)
class CentralityScores:
    month: int
    repos: tuple[str, ...]
    users: tuple[str, ...]
    auth: np.ndarray
    hub: np.ndarray
    iterations: int
    converged: bool

    @cached_property
    def _repo_pos(self) -> dict[str, int]:
        return {r: i for i, r in enumerate(self.repos)}

    def auth_of(self, repo: str) -> float:
        i = self._repo_pos.get(repo)
        return 0.0 if i is None else float(self.auth[i])

    def auth_map(self) -> dict[str, float]:
        return dict(zip(self.repos, self.auth.tolist()))

    def hub_map(self) -> dict[str, float]:
        return dict(zip(self.users, self.hub.tolist()))

    def write_csv(self, auth_path: str | Path, hub_path: str | Path | None = None) -> None:
        with open(auth_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["month", "repo", "auth"])
            for r, a in zip(self.repos, self.auth.tolist()):
                w.writerow([self.month, r, repr(a)])
        if hub_path is not None:
            with open(hub_path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["month", "user", "hub"])
                for u, h in zip(self.users, self.hub.tolist()):
                    w.writerow([self.month, u, repr(h)])


def _chunks(ptr: np.ndarray, n_parts: int) -> list[tuple[int, int]]:
    """Split rows into contiguous ranges of roughly equal edge counts."""
    n = len(ptr) - 1
    if n_parts <= 1 or n == 0:
        return [(0, n)]
    targets = np.linspace(0, ptr[-1], n_parts + 1)[1:-1]
    cuts = np.searchsorted(ptr, targets).tolist()
    bounds = sorted(set([0, *cuts, n]))
    return list(zip(bounds[:-1], bounds[1:]))


class _Sweeper:
    """Neighbor-sum sweeps over one CSR direction, optionally partitioned."""

    def __init__(self, ptr: np.ndarray, rowidx: np.ndarray, adj: np.ndarray, threads: int, pool):
        self.ptr, self.rowidx, self.adj = ptr, rowidx, adj
        self.n = len(ptr) - 1
        self.parts = _chunks(ptr, threads)
        self.pool = pool if len(self.parts) > 1 else None

    def _part(self, src: np.ndarray, out: np.ndarray, lo: int, hi: int) -> None:
        a, b = self.ptr[lo], self.ptr[hi]
        out[lo:hi] = np.bincount(self.rowidx[a:b] - lo, weights=src[self.adj[a:b]], minlength=hi - lo)

    def __call__(self, src: np.ndarray) -> np.ndarray:
        out = np.empty(self.n, dtype=np.float64)
        if self.pool is None:
            self._part(src, out, 0, self.n)
        else:
            # Disjoint output ranges; list() is the barrier.
            list(self.pool.map(lambda p: self._part(src, out, *p), self.parts))
        return out


def _normalize(x: np.ndarray) -> np.ndarray:
    norm = np.sqrt(np.sum(x * x))
    return x / norm if norm > 0 else x


def hits_iteration(snapshot: BipartiteSnapshot, auth: np.ndarray, hub: np.ndarray):
    """One round: authorities from hubs, hubs from the new authorities, then L2."""
    new_auth = _Sweeper(snapshot.repo_ptr, snapshot.repo_rows, snapshot.repo_adj, 1, None)(hub)
    new_hub = _Sweeper(snapshot.user_ptr, snapshot.user_rows, snapshot.user_adj, 1, None)(new_auth)
    return _normalize(new_auth), _normalize(new_hub)


def hits(
    snapshot: BipartiteSnapshot,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    threads: int = 1,
) -> CentralityScores:
    """HITS hub/authority weights of a star snapshot.

    Starts from all-ones vectors and stops once the largest per-node change
    in either vector falls below ``tol``. ``threads > 1`` partitions each sweep
    by node id; every node's sum is still accumulated in ascending neighbor
    order, so results match the sequential mode.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    auth = np.ones(snapshot.n_repos)
    hub = np.ones(snapshot.n_users)
    if snapshot.n_edges == 0:
        return CentralityScores(
            snapshot.month, snapshot.repos, snapshot.users,
            np.zeros(snapshot.n_repos), np.zeros(snapshot.n_users), 0, True,
        )

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        to_auth = _Sweeper(snapshot.repo_ptr, snapshot.repo_rows, snapshot.repo_adj, threads, pool)
        to_hub = _Sweeper(snapshot.user_ptr, snapshot.user_rows, snapshot.user_adj, threads, pool)
        converged = False
        it = 0
        for it in range(1, max_iter + 1):
            new_auth = to_auth(hub)
            new_hub = to_hub(new_auth)
            new_auth = _normalize(new_auth)
            new_hub = _normalize(new_hub)
            change = max(np.max(np.abs(new_auth - auth)), np.max(np.abs(new_hub - hub)))
            auth, hub = new_auth, new_hub
            if change < tol:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return CentralityScores(snapshot.month, snapshot.repos, snapshot.users, auth, hub, it, converged)


def delta_hits(scores_t: CentralityScores, scores_prev: CentralityScores, repo: str) -> float:
    if scores_t.month != scores_prev.month + 1:
        raise ValueError(
            f"delta_hits needs consecutive months, got {scores_prev.month} -> {scores_t.month}"
        )
    return scores_t.auth_of(repo) - scores_prev.auth_of(repo)


def monthly_hits(
    events: Sequence[EventRecord],
    months: Iterable[int],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    threads: int = 1,
) -> list[CentralityScores]:
    table = FirstStarTable(events)
    return [hits(table.snapshot(m), tol, max_iter, threads) for m in months]
