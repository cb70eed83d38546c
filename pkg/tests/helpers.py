"""Shared builders for tests."""

from __future__ import annotations

import numpy as np

from repocentrality.events import EventKind, EventRecord, month_start
from repocentrality.graph import BipartiteSnapshot

# criterion number -> (passed, detail); printed by the terminal summary hook
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def star(user: str, repo: str, month: int, day: int = 1) -> EventRecord:
    return EventRecord(EventKind.STAR, user, repo, month_start(month).replace(day=day))


def event(kind: EventKind, repo: str, month: int, user: str = "u", size: int = 0, day: int = 1) -> EventRecord:
    return EventRecord(kind, user, repo, month_start(month).replace(day=day),
                       size or (1 if kind is EventKind.PUSH else 0))


def snapshot_from_pairs(pairs, n_users: int | None = None, n_repos: int | None = None, month: int = 0):
    """Snapshot whose dense ids are the integers given in ``pairs``."""
    pairs = list(pairs)
    n_users = n_users if n_users is not None else 1 + max((u for u, _ in pairs), default=-1)
    n_repos = n_repos if n_repos is not None else 1 + max((r for _, r in pairs), default=-1)
    u = np.array([p[0] for p in pairs], dtype=np.int64)
    r = np.array([p[1] for p in pairs], dtype=np.int64)
    return BipartiteSnapshot.from_edges(
        month, [f"u{i}" for i in range(n_users)], [f"r{i}" for i in range(n_repos)], u, r
    )


def random_bipartite(rng: np.random.Generator, max_nodes: int = 20):
    """Random user/repo incidence with at most ``max_nodes`` nodes in total."""
    n_users = int(rng.integers(1, max_nodes))
    n_repos = int(rng.integers(1, max_nodes - n_users + 1))
    density = rng.uniform(0.1, 0.8)
    mask = rng.random((n_users, n_repos)) < density
    if not mask.any():
        mask[rng.integers(n_users), rng.integers(n_repos)] = True
    pairs = [(int(u), int(r)) for u, r in zip(*np.nonzero(mask))]
    return n_users, n_repos, pairs
