import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repocentrality.graph import (
    BipartiteSnapshot,
    CentralityScores,
    build_snapshot,
    delta_hits,
    hits,
    hits_iteration,
    monthly_hits,
)

from helpers import random_bipartite, snapshot_from_pairs, star
from oracles import dense_hits

K23 = [(u, r) for u in range(2) for r in range(3)]


def test_complete_bipartite_is_uniform():
    sc = hits(snapshot_from_pairs(K23))
    assert sc.converged
    np.testing.assert_allclose(sc.auth, 1 / math.sqrt(3), atol=1e-12)
    np.testing.assert_allclose(sc.hub, 1 / math.sqrt(2), atol=1e-12)


def test_single_edge():
    sc = hits(snapshot_from_pairs([(0, 0)]))
    assert sc.auth.tolist() == [1.0] and sc.hub.tolist() == [1.0]


def test_golden_ratio_example():
    sc = hits(snapshot_from_pairs([(0, 0), (0, 1), (1, 0)]))
    np.testing.assert_allclose(sc.auth, [0.85065, 0.52573], atol=1e-5)
    np.testing.assert_allclose(sc.hub, [0.85065, 0.52573], atol=1e-5)
    phi = (1 + math.sqrt(5)) / 2
    assert sc.auth[0] / sc.auth[1] == pytest.approx(phi, rel=1e-8)


def test_empty_snapshot_scores():
    sc = hits(snapshot_from_pairs([]))
    assert sc.iterations == 0 and sc.converged
    assert sc.auth.size == 0 and sc.hub.size == 0


def test_isolated_repo_scores_zero():
    sc = hits(snapshot_from_pairs([(0, 0), (1, 0)], n_users=2, n_repos=2))
    assert sc.auth[1] == 0.0
    assert sc.auth[0] == pytest.approx(1.0)


def test_build_snapshot_dedup_and_cutoff():
    log = [star("u1", "o/r1", 0), star("u1", "o/r1", 2), star("u2", "o/r1", 1)]
    assert build_snapshot(log, 2).n_edges == 2
    early = build_snapshot(log, 0)
    assert early.n_edges == 1
    assert early.users == ("u1",) and early.repos == ("o/r1",)
    empty = build_snapshot([], 5)
    assert (empty.n_users, empty.n_repos, empty.n_edges) == (0, 0, 0)


def test_first_star_month_is_kept():
    log = [star("u1", "o/r1", 3), star("u1", "o/r1", 1)]
    _, _, months = build_snapshot(log, 5).edges()
    assert months.tolist() == [1]


def test_adjacency_sorted_both_directions():
    snap = snapshot_from_pairs([(1, 2), (0, 1), (1, 0), (0, 2), (2, 1)])
    assert snap.starred_by(1).tolist() == [0, 2]
    assert snap.stargazers(1).tolist() == [0, 2]
    assert snap.stargazers(2).tolist() == [0, 1]


def test_duplicate_edges_rejected():
    with pytest.raises(ValueError):
        snapshot_from_pairs([(0, 0), (0, 0)])
    with pytest.raises(ValueError):
        snapshot_from_pairs([(0, 3)], n_users=1, n_repos=2)


def test_invalid_hits_options():
    snap = snapshot_from_pairs(K23)
    with pytest.raises(ValueError):
        hits(snap, tol=0)
    with pytest.raises(ValueError):
        hits(snap, max_iter=0)


def test_matches_dense_oracle():
    rng = np.random.default_rng(3)
    for _ in range(40):
        nu, nr, pairs = random_bipartite(rng, 16)
        sc = hits(snapshot_from_pairs(pairs, nu, nr), max_iter=2000)
        auth, hub = dense_hits(nu, nr, pairs)
        np.testing.assert_allclose(sc.auth, auth, atol=1e-6)
        np.testing.assert_allclose(sc.hub, hub, atol=1e-6)


def test_converged_scores_are_a_fixed_point():
    rng = np.random.default_rng(5)
    for _ in range(20):
        nu, nr, pairs = random_bipartite(rng)
        snap = snapshot_from_pairs(pairs, nu, nr)
        sc = hits(snap, max_iter=5000)
        assert sc.converged
        a, h = hits_iteration(snap, sc.auth, sc.hub)
        assert np.max(np.abs(a - sc.auth)) <= 1e-8
        assert np.max(np.abs(h - sc.hub)) <= 1e-8


def test_duplicating_users_keeps_ranking():
    rng = np.random.default_rng(11)
    nu, nr, pairs = random_bipartite(rng)
    base = hits(snapshot_from_pairs(pairs, nu, nr), max_iter=5000)
    doubled = pairs + [(u + nu, r) for u, r in pairs]
    twice = hits(snapshot_from_pairs(doubled, 2 * nu, nr), max_iter=5000)
    np.testing.assert_allclose(twice.auth, base.auth, atol=1e-9)
    assert np.argsort(-base.auth, kind="stable").tolist() == np.argsort(-twice.auth, kind="stable").tolist()


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_relabeling_permutes_scores(seed):
    rng = np.random.default_rng(seed)
    nu, nr, pairs = random_bipartite(rng)
    pu, pr = rng.permutation(nu), rng.permutation(nr)
    base = hits(snapshot_from_pairs(pairs, nu, nr), max_iter=5000)
    moved = hits(snapshot_from_pairs([(pu[u], pr[r]) for u, r in pairs], nu, nr), max_iter=5000)
    np.testing.assert_allclose(moved.auth[pr], base.auth, atol=1e-9)
    np.testing.assert_allclose(moved.hub[pu], base.hub, atol=1e-9)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_scores_nonnegative_and_unit_norm(seed):
    nu, nr, pairs = random_bipartite(np.random.default_rng(seed))
    sc = hits(snapshot_from_pairs(pairs, nu, nr))
    assert (sc.auth >= 0).all() and (sc.hub >= 0).all()
    assert np.linalg.norm(sc.auth) == pytest.approx(1.0)
    assert np.linalg.norm(sc.hub) == pytest.approx(1.0)


def test_parallel_matches_sequential():
    rng = np.random.default_rng(0)
    nu, nr, m = 3000, 2000, 30000
    u = rng.integers(0, nu, m)
    r = (rng.pareto(1.2, m) * 10).astype(np.int64) % nr
    pairs = sorted(set(zip(u.tolist(), r.tolist())))
    snap = snapshot_from_pairs(pairs, nu, nr)
    seq = hits(snap)
    for threads in (2, 3, 8):
        par = hits(snap, threads=threads)
        assert np.max(np.abs(par.auth - seq.auth)) <= 1e-12
        assert np.max(np.abs(par.hub - seq.hub)) <= 1e-12
        assert par.iterations == seq.iterations


def _scores(month, repos, auth):
    return CentralityScores(month, tuple(repos), (), np.array(auth, float), np.zeros(0), 1, True)


def test_delta_hits_examples():
    now = _scores(5, ["a", "c"], [0.5, 0.3])
    prev = _scores(4, ["a"], [0.7])
    assert delta_hits(now, prev, "a") == pytest.approx(-0.2)
    assert delta_hits(now, prev, "b") == 0.0
    assert delta_hits(now, prev, "c") == pytest.approx(0.3)
    with pytest.raises(ValueError):
        delta_hits(now, _scores(3, [], []), "a")


def test_monthly_hits_is_cumulative():
    log = [star("u1", "o/r1", 0), star("u2", "o/r2", 1), star("u2", "o/r1", 2)]
    scores = monthly_hits(log, [0, 1, 2])
    assert [s.month for s in scores] == [0, 1, 2]
    assert [len(s.repos) for s in scores] == [1, 2, 2]
    assert scores[2].auth_of("o/r1") > scores[2].auth_of("o/r2")


def test_snapshot_csv_round_trip(tmp_path):
    log = [star("u1", "o/r1", 0), star("u2", "o/r1", 1), star("u2", "o/r2", 3)]
    snap = build_snapshot(log, 3)
    snap.to_csv(tmp_path / "s.csv")
    back = BipartiteSnapshot.from_csv(tmp_path / "s.csv")
    assert back.month == 3
    assert back.users == snap.users and back.repos == snap.repos
    for a, b in zip(back.edges(), snap.edges()):
        assert a.tolist() == b.tolist()
    cut = BipartiteSnapshot.from_csv(tmp_path / "s.csv", month=1)
    assert cut.n_edges == 2


def test_scores_csv(tmp_path):
    sc = hits(snapshot_from_pairs([(0, 0), (0, 1), (1, 0)]))
    sc.write_csv(tmp_path / "a.csv", tmp_path / "h.csv")
    rows = (tmp_path / "a.csv").read_text().splitlines()
    assert rows[0] == "month,repo,auth"
    assert float(rows[1].split(",")[2]) == sc.auth[0]
    assert (tmp_path / "h.csv").read_text().startswith("month,user,hub\n")
