"""Command-line pipeline: synth/ingest -> centrality -> features -> models."""

from __future__ import annotations

import argparse
import inspect
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .analysis import (
    ablation_from_observations,
    correlation_matrix,
    evaluate_model,
    importance_table,
    per_repo_correlations,
    star_totals,
    top_k,
    write_ablation,
)
from .config import ConfigError, Settings, load_settings
from .events import (
    EventParseError,
    EventSchemaError,
    MonthOutOfRange,
    UnknownRepositoryError,
    label_all,
    month_index,
    month_label,
    parse_timestamp,
    read_descriptions_csv,
    read_events,
    read_labels_csv,
    write_events,
    write_labels_csv,
)
from .features import (
    FEATURE_NAMES,
    N_FEATURES,
    ObservationSet,
    aggregate_monthly,
    centrality_frame,
    join_centrality,
    make_observations,
    read_features_csv,
    split_by_repo,
    write_features_csv,
)
from .graph import FirstStarTable, hits
from .metrics import centrality_triple, write_centrality_csv
from .pipeline import month_span
from .survival import (
    AftModel,
    ComparablePairsError,
    FitDiagnosticsError,
    HazardModel,
    UnidentifiableError,
    fit_aft,
    fit_hazard,
    load_model,
    predicted_deprecation_month,
)
from .synth import (
    SynthConfig,
    SynthConfigError,
    generate,
    generate_planted_signal,
    write_descriptions_csv,
    write_truth_csv,
)

EXIT_CODES = [
    (ConfigError, 2), (SynthConfigError, 2),
    (FileNotFoundError, 3),
    (EventParseError, 4), (EventSchemaError, 4), (MonthOutOfRange, 4), (UnknownRepositoryError, 4),
    (UnidentifiableError, 5), (FitDiagnosticsError, 5), (ComparablePairsError, 5),
]


class UsageError(ValueError):
    pass


@dataclass
class RunManifest:
    subcommand: str
    config: str | None
    inputs: dict
    outputs: dict
    seed: int
    version: str
    wall_time_s: float
    settings: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def dump_json(obj) -> str:
    """Stable JSON text: sorted keys, fixed indent, shortest-repr floats."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def manifest_path(out: Path) -> Path:
    if out.is_dir():
        return out / "manifest.json"
    return out.with_name(out.name + ".manifest.json")


def parse_month(text: str) -> int:
    text = text.strip()
    if text.lstrip("-").isdigit():
        m = int(text)
        if m < 0:
            raise UsageError(f"month index {m} is negative")
        return m
    try:
        return month_index(parse_timestamp(f"{text}-01T00:00:00Z"))
    except (EventSchemaError, MonthOutOfRange) as exc:
        raise UsageError(f"cannot parse month {text!r}: {exc}") from None


def parse_month_range(text: str) -> range:
    """``A..B`` half-open; each end a month index or YYYY-MM."""
    if ".." not in text:
        raise UsageError(f"month range {text!r} must look like A..B")
    lo, hi = text.split("..", 1)
    a, b = parse_month(lo), parse_month(hi)
    if b < a:
        raise UsageError(f"empty month range {text!r}")
    return range(a, b)


def _require(path: str | None, flag: str) -> Path:
    if not path:
        raise UsageError(f"{flag} is required")
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{flag}: {p} does not exist")
    return p


def _out(args, default: str | None = None) -> Path:
    if not args.out and default is None:
        raise UsageError("--out is required")
    return Path(args.out or default)


def _load_observations(args) -> ObservationSet:
    obs = ObservationSet.from_csv(_require(args.observations, "--observations"))
    if len(obs) == 0:
        raise UsageError("observation table is empty")
    if obs.n_features != obs.window * N_FEATURES:
        raise EventSchemaError(
            f"{args.observations}: {obs.n_features} feature columns is not a whole number of "
            f"{N_FEATURES}-feature window rows")
    return obs


# ---------------------------------------------------------------- subcommands

def cmd_synth(args, s: Settings) -> dict:
    out = _out(args)
    if args.scenario == "planted-signal":
        allowed = set(inspect.signature(generate_planted_signal).parameters) - {"seed"}
        unknown = set(s.synth) - allowed
        if unknown:
            raise SynthConfigError(f"planted-signal scenario does not take {sorted(unknown)}")
        res = generate_planted_signal(seed=s.seed, **s.synth)
    else:
        res = generate(SynthConfig.from_mapping({**s.synth, "seed": s.seed}))
    out.parent.mkdir(parents=True, exist_ok=True)
    n = write_events(res.events, out)
    stem = out.name.split(".")[0]
    truth = out.with_name(stem + ".truth.csv")
    desc = out.with_name(stem + ".descriptions.csv")
    write_truth_csv(res.truth, truth)
    write_descriptions_csv(res.truth, desc)
    outputs = {"events": str(out), "truth": str(truth), "descriptions": str(desc)}
    if args.scenario == "planted-signal":
        sig = out.with_name(stem + ".signal.csv")
        res.vitality.to_csv(sig, index=False, lineterminator="\n")
        outputs["signal"] = str(sig)
    deprecated = sum(t.deprecation_month is not None for t in res.truth.values())
    return {"outputs": outputs, "summary": {"events": n, "repos": len(res.truth), "deprecated": deprecated}}


def cmd_ingest(args, s: Settings) -> dict:
    src = _require(args.events, "--events")
    out = _out(args)
    stats: dict = {}
    events = read_events(src, stats)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_events(events, out)
    span = month_span(events)
    summary = {"stats": dict(sorted(stats.items())), "events": len(events),
               "first_month": span.start if events else None, "last_month": span.stop - 1 if events else None}
    return {"inputs": {"events": str(src)}, "outputs": {"events": str(out)}, "summary": summary}


def _months(args, events) -> range:
    if getattr(args, "month", None) is not None:
        m = parse_month(args.month)
        return range(m, m + 1)
    if args.month_range:
        return parse_month_range(args.month_range)
    return month_span(events)


def cmd_snapshot(args, s: Settings) -> dict:
    src = _require(args.events, "--events")
    out = _out(args)
    events = read_events(src)
    table = FirstStarTable(events)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for m in _months(args, events):
        path = out / f"snapshot_{month_label(m)}.csv"
        table.snapshot(m).to_csv(path)
        files[month_label(m)] = str(path)
    return {"inputs": {"events": str(src)}, "outputs": {"snapshots": files}, "summary": {"months": len(files)}}


def compute_centrality(events, months, s: Settings):
    table = FirstStarTable(events)
    scores = []
    for m in months:
        scores.append(hits(table.snapshot(m), s.tol, s.max_iter, s.threads))
    return scores, [centrality_triple(sc) for sc in scores]


def cmd_centrality(args, s: Settings) -> dict:
    src = _require(args.events, "--events")
    out = _out(args)
    events = read_events(src)
    months = _months(args, events)
    scores, triples = compute_centrality(events, months, s)
    out.mkdir(parents=True, exist_ok=True)
    (out / "hubs").mkdir(exist_ok=True)
    for sc in scores:
        label = month_label(sc.month)
        sc.write_csv(out / f"auth_{label}.csv", out / "hubs" / f"hub_{label}.csv")
    combined = out / "centrality.csv"
    write_centrality_csv(triples, combined)
    unconverged = [month_label(sc.month) for sc in scores if not sc.converged]
    return {
        "inputs": {"events": str(src)},
        "outputs": {"directory": str(out), "centrality": str(combined)},
        "summary": {"months": len(scores), "unconverged": unconverged,
                    "iterations": {month_label(sc.month): sc.iterations for sc in scores}},
    }


def _labels(args, events, s: Settings):
    if getattr(args, "labels", None):
        return read_labels_csv(_require(args.labels, "--labels"))
    descriptions = read_descriptions_csv(_require(args.descriptions, "--descriptions")) if args.descriptions else {}
    return label_all(events, descriptions, s.keywords, s.horizon_end)


def cmd_label(args, s: Settings) -> dict:
    src = _require(args.events, "--events")
    out = _out(args)
    events = read_events(src)
    labels = _labels(args, events, s)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_labels_csv(labels, out)
    counts: dict = {}
    for lab in labels.values():
        counts[lab.status.value] = counts.get(lab.status.value, 0) + 1
    return {"inputs": {"events": str(src)}, "outputs": {"labels": str(out)}, "summary": dict(sorted(counts.items()))}


def cmd_features(args, s: Settings) -> dict:
    src = _require(args.events, "--events")
    out = _out(args)
    events = read_events(src)
    if args.centrality:
        cen = pd.read_csv(_require(args.centrality, "--centrality"), dtype={"repo": str},
                          float_precision="round_trip")
        missing = {"month", "repo", "weight", "weight_pct", "weight_z"} - set(cen.columns)
        if missing:
            raise EventSchemaError(f"{args.centrality}: missing columns {sorted(missing)}")
    else:
        cen = centrality_frame(compute_centrality(events, month_span(events), s)[1])
    table = join_centrality(aggregate_monthly(events), cen)
    labels = _labels(args, events, s)
    obs = make_observations(table, labels, s.window, s.stride)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"features": out / "features.csv", "labels": out / "labels.csv", "observations": out / "observations.csv"}
    write_features_csv(table, paths["features"])
    write_labels_csv(labels, paths["labels"])
    obs.to_csv(paths["observations"])
    return {
        "inputs": {"events": str(src), "centrality": args.centrality},
        "outputs": {k: str(v) for k, v in paths.items()},
        "summary": {"rows": len(table), "observations": len(obs), "uncensored": int(obs.event.sum()),
                    "window": s.window},
    }


def _feature_names(args) -> list[str]:
    names = list(FEATURE_NAMES)
    for ex in args.exclude or []:
        if ex not in names:
            raise UsageError(f"unknown feature {ex!r}; choose from {FEATURE_NAMES}")
        names.remove(ex)
    if not names:
        raise UsageError("every feature was excluded")
    return names


def _fit(args, s: Settings, kind: str) -> dict:
    obs = _load_observations(args)
    out = _out(args)
    names = _feature_names(args)
    train, test = split_by_repo(obs, s.test_fraction, s.seed)
    sub = train.columns(names)
    if kind == "aft":
        model = fit_aft(sub, features=names, **s.aft)
        summary = {"converged": model.converged, "iterations": model.iterations, "sigma": model.sigma,
                   "loglik": model.loglik}
    else:
        opts = {**s.hazard}
        model = fit_hazard(sub, horizons=s.horizons, seed=s.seed, features=names, **opts)
        summary = {"final_loss": model.final_loss, "horizons": model.horizons}
    payload = model.to_dict()
    payload["split"] = {"seed": s.seed, "test_fraction": s.test_fraction,
                        "n_train": len(train), "n_test": len(test)}
    atomic_write_text(out, dump_json(payload))
    return {"inputs": {"observations": args.observations}, "outputs": {"model": str(out)}, "summary": summary}


def cmd_fit_aft(args, s: Settings) -> dict:
    return _fit(args, s, "aft")


def cmd_fit_hazard(args, s: Settings) -> dict:
    return _fit(args, s, "hazard")


def _split_of(model_path: Path, s: Settings, args) -> tuple[int, float]:
    split = json.loads(model_path.read_text()).get("split") or {}
    seed = args.seed if args.seed is not None else split.get("seed", s.seed)
    return int(seed), float(split.get("test_fraction", s.test_fraction))


def hazard_summary(model: HazardModel, obs: ObservationSet) -> dict:
    curves = model.predict_hazard_curve(obs.x)
    months = [predicted_deprecation_month(c) for c in curves]
    hist: dict = {}
    for m in months:
        key = "none" if m is None else str(m)
        hist[key] = hist.get(key, 0) + 1
    return {"mean_hazard_curve": curves.mean(axis=0).tolist() if len(curves) else [],
            "predicted_deprecation_month_counts": dict(sorted(hist.items()))}


def cmd_evaluate(args, s: Settings) -> dict:
    model_path = _require(args.model, "--model")
    model = load_model(model_path)
    obs = _load_observations(args)
    out = _out(args)
    seed, frac = _split_of(model_path, s, args)
    _, test = split_by_repo(obs, frac, seed)
    names = list(model.features or FEATURE_NAMES)
    test = test.columns(names)
    ev = evaluate_model(model, test)
    if not ev["n_pairs"]:
        raise ComparablePairsError("test split has no comparable pairs")
    report = {"model": "aft" if isinstance(model, AftModel) else "hazard", "features": names,
              "split_seed": seed, "test_fraction": frac, **ev}
    if isinstance(model, HazardModel):
        report.update(hazard_summary(model, test))
    if args.importance:
        report["permutation_importance"] = importance_table(model, test, names, s.importance_repeats, seed)
    atomic_write_text(out, dump_json(report))
    return {"inputs": {"model": str(model_path), "observations": args.observations},
            "outputs": {"report": str(out)}, "summary": {"c_index": ev["c_index"]}}


def _read_feature_table(args) -> pd.DataFrame:
    table = read_features_csv(_require(args.features, "--features"))
    missing = {"repo", "month", *FEATURE_NAMES} - set(table.columns)
    if missing:
        raise EventSchemaError(f"{args.features}: missing columns {sorted(missing)}")
    return table


def cmd_correlate(args, s: Settings) -> dict:
    table = _read_feature_table(args)
    out = _out(args)
    pooled = correlation_matrix(table, FEATURE_NAMES)
    per_repo = per_repo_correlations(table)
    payload = {
        "pooled_spearman": {a: {b: _nan_to_none(pooled.loc[a, b]) for b in FEATURE_NAMES} for a in FEATURE_NAMES},
        "per_repo_weight_spearman": per_repo.quantiles,
        "n_eligible": per_repo.n_eligible,
        "n_skipped": per_repo.n_skipped,
    }
    atomic_write_text(out, dump_json(payload))
    return {"inputs": {"features": args.features}, "outputs": {"correlations": str(out)},
            "summary": {"n_eligible": per_repo.n_eligible}}


def _nan_to_none(v):
    v = float(v)
    return None if math.isnan(v) else v


def cmd_ablate(args, s: Settings) -> dict:
    obs = _load_observations(args)
    out = _out(args)
    fit_options = {"aft_options": s.aft, "hazard_options": {"horizons": s.horizons, **s.hazard}}
    results = ablation_from_observations(obs, s.seed, s.test_fraction, args.kind, s.threads, **fit_options)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_ablation(results, out)
    return {"inputs": {"observations": args.observations}, "outputs": {"ablation": str(out)},
            "summary": {r.model_name: r.c_index for r in results}}


def topk_lists(table: pd.DataFrame, k: int, month: int | None = None) -> dict:
    month = int(table["month"].max()) if month is None else month
    now = table[table["month"] == month]
    by_hits = top_k(dict(zip(now["repo"], now["weight"])), k)
    by_stars = top_k(star_totals(table, month), k)
    overlap = sorted({r for r, _ in by_hits} & {r for r, _ in by_stars})
    return {"month": month_label(month), "by_hits": [[r, v] for r, v in by_hits],
            "by_stars": [[r, v] for r, v in by_stars], "overlap": overlap}


def _read_json(path: str) -> dict:
    return json.loads(_require(path, path).read_text())


def cmd_report(args, s: Settings) -> dict:
    out = _out(args)
    bundle: dict = {}
    inputs = {}
    if args.evaluation:
        bundle["evaluation"] = [_read_json(p) for p in args.evaluation]
        inputs["evaluation"] = list(args.evaluation)
    if args.ablation:
        p = _require(args.ablation, "--ablation")
        if p.suffix == ".csv":
            bundle["ablation"] = pd.read_csv(p).to_dict(orient="records")
        else:
            bundle["ablation"] = json.loads(p.read_text())["rows"]
        inputs["ablation"] = str(p)
    if args.correlations:
        bundle["correlations"] = _read_json(args.correlations)
        inputs["correlations"] = args.correlations
    if args.features:
        bundle["top_k"] = topk_lists(_read_feature_table(args), s.top_k)
        inputs["features"] = args.features
    if args.model:
        model = load_model(_require(args.model, "--model"))
        if not isinstance(model, HazardModel):
            raise UsageError("report --model expects a hazard model for per-repo curves")
        obs = _load_observations(args).columns(list(model.features or FEATURE_NAMES))
        # latest observation per repository
        last = {}
        for i, (r, m) in enumerate(zip(obs.repos, obs.obs_month)):
            if r not in last or m > obs.obs_month[last[r]]:
                last[r] = i
        curves = {}
        for r in sorted(last):
            c = model.predict_hazard_curve(obs.x[last[r]])
            curves[r] = {"obs_month": month_label(int(obs.obs_month[last[r]])), "hazard": c.tolist(),
                         "predicted_deprecation_month": predicted_deprecation_month(c)}
        bundle["hazard_curves"] = curves
        inputs["model"] = args.model
    if not bundle:
        raise UsageError("report needs at least one of --evaluation, --ablation, --correlations, --features, --model")
    atomic_write_text(out, dump_json(bundle))
    return {"inputs": inputs, "outputs": {"report": str(out)}, "summary": {"sections": sorted(bundle)}}


# ---------------------------------------------------------------- parsing

COMMANDS: dict[str, Callable] = {
    "synth": cmd_synth, "ingest": cmd_ingest, "snapshot": cmd_snapshot, "centrality": cmd_centrality,
    "features": cmd_features, "label": cmd_label, "fit-aft": cmd_fit_aft, "fit-hazard": cmd_fit_hazard,
    "evaluate": cmd_evaluate, "correlate": cmd_correlate, "ablate": cmd_ablate, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON settings file")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--out")
    common.add_argument("--tol", type=float)
    common.add_argument("--max-iter", type=int, dest="max_iter")
    common.add_argument("--window", type=int)
    common.add_argument("--stride", type=int)
    common.add_argument("--horizons", type=int)
    common.add_argument("--test-fraction", type=float, dest="test_fraction")

    parser = argparse.ArgumentParser(prog="repocent", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text)

    p = add("synth", "generate a synthetic event log")
    p.add_argument("--scenario", choices=["ecosystem", "planted-signal"], default="ecosystem")
    p = add("ingest", "parse and canonicalize an event archive")
    p.add_argument("--events")
    for name, text in (("snapshot", "write cumulative star-graph edge lists"),
                       ("centrality", "monthly HITS scores and normalized centrality")):
        p = add(name, text)
        p.add_argument("--events")
        p.add_argument("--month-range", dest="month_range")
        p.add_argument("--month")
    p = add("label", "deprecation labels per repository")
    p.add_argument("--events")
    p.add_argument("--descriptions")
    p.add_argument("--horizon-end", dest="horizon_end")
    p = add("features", "monthly feature table, labels and observations")
    p.add_argument("--events")
    p.add_argument("--centrality")
    p.add_argument("--descriptions")
    p.add_argument("--labels")
    p.add_argument("--horizon-end", dest="horizon_end")
    for name in ("fit-aft", "fit-hazard"):
        p = add(name, f"train the {name[4:]} model on the training split")
        p.add_argument("--observations")
        p.add_argument("--exclude", action="append", help="feature to leave out (repeatable)")
    p = add("evaluate", "C-index of a saved model on its held-out split")
    p.add_argument("--model")
    p.add_argument("--observations")
    p.add_argument("--importance", action="store_true")
    p = add("correlate", "Spearman correlation study")
    p.add_argument("--features")
    p = add("ablate", "feature ablation table")
    p.add_argument("--observations")
    p.add_argument("--kind", choices=["aft", "hazard"], default="aft")
    p = add("report", "collate results into one JSON bundle")
    p.add_argument("--evaluation", action="append")
    p.add_argument("--ablation")
    p.add_argument("--correlations")
    p.add_argument("--features")
    p.add_argument("--model")
    p.add_argument("--observations")
    return parser


def _cli_settings(args) -> dict:
    keys = ["seed", "threads", "tol", "max_iter", "window", "stride", "horizons", "test_fraction"]
    out = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "horizon_end", None) is not None:
        out["horizon_end"] = parse_month(args.horizon_end)
    return out


def exit_code_for(exc: BaseException) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 2 if isinstance(exc, UsageError) else 1


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        settings = load_settings(args.config, _cli_settings(args))
        result = COMMANDS[args.command](args, settings)
        outputs = result.get("outputs", {})
        for value in outputs.values():
            paths = value.values() if isinstance(value, dict) else [value]
            for p in paths:
                if not Path(p).exists():
                    raise RuntimeError(f"expected output {p} was not written")
        manifest = RunManifest(
            subcommand=args.command,
            config=args.config or os.environ.get("REPOCENT_CONFIG"),
            inputs=result.get("inputs", {}),
            outputs=outputs,
            seed=settings.seed,
            version=__version__,
            wall_time_s=round(time.perf_counter() - started, 6),
            settings={k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(settings).items()},
            summary=result.get("summary", {}),
        )
        atomic_write_text(manifest_path(Path(args.out)), dump_json(asdict(manifest)))
    except Exception as exc:
        code = exit_code_for(exc)
        record = {"error": type(exc).__name__, "message": str(exc), "subcommand": args.command, "exit_code": code}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return code
    return 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
