"""Correlation studies, rankings, permutation importance and ablations."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .events import DeprecationLabel
from .features import COUNT_COLUMNS, FEATURE_NAMES, ObservationSet, split_by_repo
from .graph import CentralityScores, delta_hits
from .survival import AftModel, HazardModel, concordance, fit_aft, fit_hazard

DAYS_PER_MONTH = 365.25 / 12


class UndefinedCorrelationError(ValueError):
    pass


def spearman(x, y) -> float:
    """Spearman's rho as the Pearson correlation of average ranks."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d and of equal length")
    if len(x) < 3:
        raise ValueError("spearman needs at least 3 points")
    rx, ry = rankdata(x), rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0:
        raise UndefinedCorrelationError("constant input")
    return float(np.clip((rx @ ry) / denom, -1.0, 1.0))


def correlation_matrix(table: pd.DataFrame, columns: Sequence[str] = FEATURE_NAMES) -> pd.DataFrame:
    """Pairwise Spearman over pooled rows; constant columns come back as NaN."""
    if len(table) < 3:
        raise ValueError("correlation_matrix needs at least 3 rows")
    cols = list(columns)
    out = pd.DataFrame(np.nan, index=cols, columns=cols)
    constant = {c for c in cols if table[c].nunique() <= 1}
    for i, a in enumerate(cols):
        if a in constant:
            continue
        out.loc[a, a] = 1.0
        for b in cols[i + 1:]:
            if b in constant:
                continue
            rho = spearman(table[a].to_numpy(), table[b].to_numpy())
            out.loc[a, b] = out.loc[b, a] = rho
    return out


@dataclass
class PerRepoCorrelations:
    rho: dict[str, dict[str, float]]
    quantiles: dict[str, dict[str, float]]
    n_eligible: int
    n_skipped: int


def per_repo_correlations(
    table: pd.DataFrame,
    target: str = "weight",
    columns: Sequence[str] = COUNT_COLUMNS,
) -> PerRepoCorrelations:
    """Spearman between each repo's monthly ``target`` series and each column.

    Repos with fewer than 3 months or a constant target are skipped; a
    constant comparison column leaves that single entry out.
    """
    rho: dict[str, dict[str, float]] = {}
    skipped = 0
    for repo, g in table.groupby("repo", sort=True):
        if len(g) < 3 or g[target].nunique() <= 1:
            skipped += 1
            continue
        t = g[target].to_numpy(float)
        row = {}
        for c in columns:
            v = g[c].to_numpy(float)
            if np.unique(v).size > 1:
                row[c] = spearman(t, v)
        rho[repo] = row
    quantiles = {}
    for c in columns:
        vals = np.array([r[c] for r in rho.values() if c in r])
        if len(vals):
            q25, q50, q75 = np.quantile(vals, [0.25, 0.5, 0.75]).tolist()
            quantiles[c] = {"q25": q25, "median": q50, "q75": q75, "n": int(len(vals))}
    return PerRepoCorrelations(rho, quantiles, len(rho), skipped)


def top_k(values: Mapping[str, float], k: int) -> list[tuple[str, float]]:
    """Largest ``k`` entries, ties broken by identifier."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return sorted(values.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


def star_totals(table: pd.DataFrame, month: int | None = None) -> dict[str, float]:
    """Cumulative stars per repo up to ``month`` (all months when None)."""
    if month is not None:
        table = table[table["month"] <= month]
    return {r: float(v) for r, v in table.groupby("repo")["stars"].sum().items()}


Model = AftModel | HazardModel


def model_c_index(model: Model, obs: ObservationSet) -> float:
    return concordance(model.risk(obs.x), obs.duration, obs.event)[0]


def permutation_importance(
    model: Model,
    obs: ObservationSet,
    feature_index: int,
    repeats: int = 5,
    seed: int = 0,
    permute: Callable[[np.random.Generator, int], np.ndarray] | None = None,
) -> float:
    """Mean drop in C-index after shuffling one feature column across rows."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    base = model_c_index(model, obs)
    rng = np.random.default_rng(seed)
    permute = permute or (lambda g, n: g.permutation(n))
    drops = []
    for _ in range(repeats):
        x = obs.x.copy()
        x[:, feature_index] = x[permute(rng, len(obs)), feature_index]
        drops.append(base - concordance(model.risk(x), obs.duration, obs.event)[0])
    return float(np.mean(drops))


def importance_table(model: Model, obs: ObservationSet, names: Sequence[str] | None = None,
                     repeats: int = 5, seed: int = 0) -> dict[str, float]:
    names = list(names or getattr(model, "features", None) or [f"x{i}" for i in range(obs.n_features)])
    return {n: permutation_importance(model, obs, i, repeats, seed + i) for i, n in enumerate(names)}


BASELINE = list(COUNT_COLUMNS)
FULL = list(FEATURE_NAMES)


def ablation_configs() -> list[tuple[str, list[str]]]:
    """The twelve feature sets of the ablation table, in its row order."""
    configs = [("Baseline", BASELINE), ("Baseline-stars", [c for c in BASELINE if c != "stars"])]
    for drop in ["weight", "weight_pct", "weight_z", "comments", "commits", "issues", "prs", "stars", "tags"]:
        configs.append((f"Full-{drop}", [c for c in FULL if c != drop]))
    configs.append(("Full", FULL))
    return configs


@dataclass
class AblationResult:
    model_name: str
    excluded_features: list[str]
    c_index: float
    mean_predicted_lifespan_days: float
    n_pairs: int = 0
    error: str | None = None


def fit_model(kind: str, train: ObservationSet, names: Sequence[str], seed: int = 0,
              aft_options: dict | None = None, hazard_options: dict | None = None) -> Model:
    sub = train.columns(names)
    if kind == "aft":
        return fit_aft(sub, features=names, **(aft_options or {}))
    if kind == "hazard":
        return fit_hazard(sub, features=names, seed=seed, **(hazard_options or {}))
    raise ValueError(f"unknown model kind {kind!r}")


def evaluate_model(model: Model, test: ObservationSet) -> dict:
    c, pairs = concordance(model.risk(test.x), test.duration, test.event)
    out = {"c_index": c, "n_pairs": pairs, "n_test": len(test)}
    if isinstance(model, AftModel):
        out["mean_predicted_lifespan_days"] = float(np.mean(model.predict_lifespan(test.x))) * DAYS_PER_MONTH
    return out


def _ablation_row(kind, train, test, seed, name, cols, fit_options) -> AblationResult:
    excluded = [c for c in FULL if c not in cols]
    try:
        model = fit_model(kind, train, cols, seed, **fit_options)
        ev = evaluate_model(model, test.columns(cols))
        if not ev["n_pairs"]:
            raise ValueError("test set has no comparable pairs")
        return AblationResult(name, excluded, ev["c_index"],
                              ev.get("mean_predicted_lifespan_days", float("nan")), ev["n_pairs"])
    except Exception as exc:  # one failed row must not sink the table
        return AblationResult(name, excluded, float("nan"), float("nan"), 0, f"{type(exc).__name__}: {exc}")


def run_ablation(
    train: ObservationSet,
    test: ObservationSet,
    kind: str = "aft",
    seed: int = 0,
    configs: Sequence[tuple[str, list[str]]] | None = None,
    threads: int = 1,
    **fit_options,
) -> list[AblationResult]:
    """Fit and score every feature configuration on one fixed split.

    Rows are independent, so ``threads > 1`` fits them concurrently; the
    table is identical either way.
    """
    configs = list(configs or ablation_configs())
    if threads <= 1:
        return [_ablation_row(kind, train, test, seed, n, c, fit_options) for n, c in configs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_ablation_row, kind, train, test, seed, n, c, fit_options) for n, c in configs]
        return [f.result() for f in futures]


def ablation_from_observations(obs: ObservationSet, seed: int = 0, test_fraction: float = 0.2,
                               kind: str = "aft", threads: int = 1, **fit_options) -> list[AblationResult]:
    train, test = split_by_repo(obs, test_fraction, seed)
    return run_ablation(train, test, kind, seed, threads=threads, **fit_options)


def ablation_rows(results: Sequence[AblationResult]) -> list[dict]:
    return [
        {"Model": r.model_name, "C-Index": r.c_index,
         "Predicted Lifespan (Days, Mean)": r.mean_predicted_lifespan_days}
        for r in results
    ]


def write_ablation(results: Sequence[AblationResult], path: str | Path) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["Model", "C-Index", "Predicted Lifespan (Days, Mean)"], lineterminator="\n")
            w.writeheader()
            for row in ablation_rows(results):
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    else:
        payload = {"rows": ablation_rows(results), "details": [asdict(r) for r in results]}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n")


def pre_deprecation_delta(
    scores: Sequence[CentralityScores],
    labels: Mapping[str, DeprecationLabel],
    lookback: int = 3,
) -> dict[str, float]:
    """Mean month-over-month authority change over the ``lookback`` months
    before each deprecated repo's deprecation month.

    Repos whose lookback window is not covered by ``scores`` are left out.
    """
    by_month = {s.month: s for s in scores}
    out = {}
    for repo, label in sorted(labels.items()):
        if not label.deprecated:
            continue
        d = label.month
        months = range(d - lookback, d)
        if not all(m in by_month and m - 1 in by_month for m in months):
            continue
        out[repo] = float(np.mean([delta_hits(by_month[m], by_month[m - 1], repo) for m in months]))
    return out
