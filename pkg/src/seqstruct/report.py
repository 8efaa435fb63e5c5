"""End-to-end analysis runs, verdicts, and report emission.

Every stage writes its result under ``<out>/datasets/<name>/`` together with
a fingerprint of the inputs that produced it, so an interrupted run resumes
from whatever is already on disk and a changed config recomputes only the
stages it touches.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import platform
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from seqstruct import kernels
from seqstruct.config import MetricsConfig, RunConfig, fingerprint
from seqstruct.data import PIPELINE_ORDER, compute_stats, preprocess, read_canonical, read_log, write_canonical
from seqstruct.metrics import (
    evaluate_split,
    hit_rate_at_k,
    jaccard_at_k,
    mean_jaccard,
    ndcg_at_k,
    rank_datasets,
    relative_change,
    spearman,
)
from seqstruct.models import build_model, train
from seqstruct.protocol import build_split, load_split, save_split
from seqstruct.rules import rule_shuffle_delta
from seqstruct.synth import generate, write_log

log = logging.getLogger(__name__)

REPORT_VERSION = 1

VERDICT_RULE = (
    "weak: for at least one model every accuracy relative change (HR@k, NDCG@k) is above "
    "{acc:+.0%}, and at least one confirming diagnostic agrees (Jaccard@k above {jac:.4f} for some "
    "model, or a rule-count relative change above {rules:+.0%}). "
    "strong: every accuracy relative change of every model is at most {strong:+.0%}. "
    "Anything else is inconclusive. This rule is a codified reading of the shuffle diagnostics, "
    "not a statistical test."
)


# verdicts


def classify(row: dict, thresholds: MetricsConfig | None = None) -> tuple[str, str]:
    """Verdict for one dataset row.

    ``row`` looks like ``{"models": {arch: {"hr_change", "ndcg_change",
    "jaccard"}}, "rules": {n: change}}``; any value may be None.

    Returns:
        ``(verdict, reason)`` with verdict in weak / strong / inconclusive.
    """
    t = thresholds or MetricsConfig()
    models = row.get("models") or {}
    acc = {}
    for arch, m in models.items():
        vals = [m.get(key) for key in ("hr_change", "ndcg_change")]
        vals = [v for v in vals if v is not None and not math.isnan(v)]
        if vals:
            acc[arch] = vals
    if not acc:
        return "inconclusive", "missing accuracy diagnostics"

    small_drop = sorted(a for a, vals in acc.items() if all(v > t.accuracy_weak_above for v in vals))
    confirming = []
    for arch, m in sorted(models.items()):
        jac = m.get("jaccard")
        if jac is not None and jac > t.jaccard_weak_above:
            confirming.append(f"jaccard[{arch}]={jac:.3f}")
    for n, change in sorted((row.get("rules") or {}).items()):
        if change is not None and change > t.rules_weak_above:
            confirming.append(f"rules[{n}-gram]={change:+.1%}")
    if small_drop and confirming:
        return "weak", f"small accuracy drop for {', '.join(small_drop)}; confirmed by {', '.join(confirming)}"

    if len(acc) == len(models) and all(v <= t.accuracy_strong_at_most for vals in acc.values() for v in vals):
        return "strong", f"every accuracy change is at most {t.accuracy_strong_at_most:+.0%}"
    if small_drop:
        return "inconclusive", f"small accuracy drop for {', '.join(small_drop)} but no confirming diagnostic"
    return "inconclusive", "accuracy changes fall between the weak and strong bands"


def flags_for(row: dict, thresholds: MetricsConfig) -> dict:
    """Per-diagnostic weak flags (True = weak, None = undefined)."""
    out = {}
    for arch, m in sorted((row.get("models") or {}).items()):
        for key in ("hr_change", "ndcg_change"):
            v = m.get(key)
            out[f"{arch}_{key}"] = None if v is None else bool(v > thresholds.accuracy_weak_above)
        v = m.get("jaccard")
        out[f"{arch}_jaccard"] = None if v is None else bool(v > thresholds.jaccard_weak_above)
    for n, v in sorted((row.get("rules") or {}).items()):
        out[f"rules_{n}gram_change"] = None if v is None else bool(v > thresholds.rules_weak_above)
    return out


def diagnostic_names(archs, ngrams) -> list[str]:
    names = []
    for arch in archs:
        names += [f"{arch}_hr_change", f"{arch}_ndcg_change"]
    names += [f"{arch}_jaccard" for arch in archs]
    names += [f"rules_{n}gram_change" for n in ngrams]
    return names


def diagnostics_of(row: dict) -> dict:
    out = {}
    for arch, m in (row.get("models") or {}).items():
        out[f"{arch}_hr_change"] = m.get("hr_change")
        out[f"{arch}_ndcg_change"] = m.get("ndcg_change")
        out[f"{arch}_jaccard"] = m.get("jaccard")
    for n, v in (row.get("rules") or {}).items():
        out[f"rules_{n}gram_change"] = v
    return out


# aggregation


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return math.fsum(values) / len(values), std


def aggregate_runs(runs: list[dict]) -> dict:
    """Seed-level run records for one (dataset, model) -> aggregate entry.

    Relative changes come from the seed-averaged before/after values.
    """
    runs = sorted(runs, key=lambda r: r["seed"])
    out = {"seeds": [r["seed"] for r in runs]}
    for key in ("hr_before", "hr_after", "ndcg_before", "ndcg_after", "jaccard"):
        vals = [r[key] for r in runs]
        out[key], out[f"{key}_std"] = _mean_std(vals)
        out[f"{key}_per_seed"] = vals
    out["hr_change"] = relative_change(out["hr_before"], out["hr_after"])
    out["ndcg_change"] = relative_change(out["ndcg_before"], out["ndcg_after"])
    out["hr_change_per_seed"] = [relative_change(r["hr_before"], r["hr_after"]) for r in runs]
    out["ndcg_change_per_seed"] = [relative_change(r["ndcg_before"], r["ndcg_after"]) for r in runs]
    out["n_evaluated"] = [r["n_evaluated"] for r in runs]
    out["skipped"] = [r["skipped_before"] for r in runs]
    out["best_epoch"] = [r["best_epoch"] for r in runs]
    return out


def run_record(arch: str, seed: int, k: int, original, shuffled, test_instances, model) -> dict:
    """Seed-level record holding every per-user list, so aggregates can be re-derived."""
    targets = {inst.user: inst.target for inst in test_instances}
    users = sorted(set(original.lists) & set(shuffled.lists))
    per_user = [
        {
            "user": u,
            "target": targets[u],
            "original": list(original.lists[u].items),
            "shuffled": list(shuffled.lists[u].items),
        }
        for u in users
    ]
    return {
        "architecture": arch,
        "seed": seed,
        "k": k,
        "hr_before": original.hr,
        "hr_after": shuffled.hr,
        "ndcg_before": original.ndcg,
        "ndcg_after": shuffled.ndcg,
        "jaccard": mean_jaccard(original, shuffled, k),
        "n_evaluated": original.n_evaluated,
        "skipped_before": original.skipped,
        "skipped_after": shuffled.skipped,
        "best_epoch": model.best_epoch,
        "epochs_run": len(model.history),
        "history": model.history,
        "per_user": per_user,
    }


def recompute_run(record: dict) -> dict:
    """HR/NDCG/Jaccard re-derived from a record's per-user lists."""
    k = record["k"]
    pu = record["per_user"]
    n = len(pu)
    return {
        "hr_before": math.fsum(hit_rate_at_k(p["original"], p["target"], k) for p in pu) / n,
        "hr_after": math.fsum(hit_rate_at_k(p["shuffled"], p["target"], k) for p in pu) / n,
        "ndcg_before": math.fsum(ndcg_at_k(p["original"], p["target"], k) for p in pu) / n,
        "ndcg_after": math.fsum(ndcg_at_k(p["shuffled"], p["target"], k) for p in pu) / n,
        "jaccard": math.fsum(jaccard_at_k(p["original"], p["shuffled"], k) for p in pu) / n,
    }


# orchestration


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dumps(obj) + "\n")
    tmp.replace(path)


def _read_cached(path: Path, fp: str):
    if not path.exists():
        return None
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError:
        return None
    return obj if obj.get("fingerprint") == fp else None


class _Timer:
    def __init__(self):
        self.stages: dict[str, float] = {}
        self.cached: dict[str, bool] = {}

    def run(self, name, fn, cached=False):
        started = time.perf_counter()
        try:
            return fn()
        finally:
            self.stages[name] = time.perf_counter() - started
            self.cached[name] = cached


def _load_raw(cfg: RunConfig, ds, ddir: Path):
    if ds.synth is not None:
        raw_path = ddir / "raw.csv"
        log_ = generate(ds.synth)
        write_log(log_, raw_path)
        return log_
    return read_log(cfg.dataset_path(ds), ds.schema)


def analyze_dataset(cfg: RunConfig, ds, out: Path, timer: _Timer) -> dict:
    """All stages for one dataset; raises on the first failing stage."""
    ddir = out / "datasets" / ds.name
    ddir.mkdir(parents=True, exist_ok=True)
    stage = {"name": "preprocess"}
    try:
        return _analyze(cfg, ds, ddir, timer, stage)
    except Exception as exc:
        exc.stage = stage["name"]
        raise


def _analyze(cfg, ds, ddir, timer, stage) -> dict:
    source = {"synth": asdict(ds.synth)} if ds.synth is not None else {
        "path": ds.path,
        "schema": asdict(ds.schema),
        "size": cfg.dataset_path(ds).stat().st_size,
        "mtime_ns": cfg.dataset_path(ds).stat().st_mtime_ns,
    }
    fp_pre = fingerprint("preprocess", source, asdict(ds.preprocess))
    stats_path = ddir / "stats.json"
    canon = ddir / "preprocessed.tsv"
    cached = _read_cached(stats_path, fp_pre)
    if cached is not None and canon.exists():
        log_ = timer.run(f"{ds.name}/preprocess", lambda: read_canonical(canon), cached=True)
        stats = cached["stats"]
    else:
        def _pre():
            raw = _load_raw(cfg, ds, ddir)
            clean = preprocess(raw, ds.preprocess)
            write_canonical(clean, canon)
            st = compute_stats(clean).to_dict()
            _write_json(stats_path, {"fingerprint": fp_pre, "stats": st, "skipped_rows": raw.skipped_rows})
            return clean, st
        log_, stats = timer.run(f"{ds.name}/preprocess", _pre)
    if len(log_) == 0:
        raise ValueError("no interactions left after preprocessing")

    stage["name"] = "split"
    p = cfg.protocol
    fp_split = fingerprint("split", fp_pre, asdict(p))
    split_dir = ddir / "split"
    marker = _read_cached(split_dir / "fingerprint.json", fp_split)
    if marker is not None:
        split = timer.run(f"{ds.name}/split", lambda: load_split(split_dir), cached=True)
    else:
        def _split():
            sp = build_split(log_, q=p.q, val_user_fraction=p.val_user_fraction, seed=p.split_seed)
            save_split(sp, split_dir)
            _write_json(split_dir / "fingerprint.json", {"fingerprint": fp_split})
            return sp
        split = timer.run(f"{ds.name}/split", _split)

    stage["name"] = "rules"
    r = cfg.rules
    rules = {}
    for n in r.ngrams:
        fp_rules = fingerprint("rules", fp_pre, n, r.min_support, r.min_confidence, cfg.seeds)
        path = ddir / f"rules_{n}gram.json"
        got = _read_cached(path, fp_rules)
        if got is None:
            def _rules(n=n, fp=fp_rules, path=path):
                st = rule_shuffle_delta(log_, n, r.min_support, r.min_confidence, cfg.seeds).to_dict()
                st["fingerprint"] = fp
                _write_json(path, st)
                return st
            got = timer.run(f"{ds.name}/rules_{n}gram", _rules)
        else:
            timer.cached[f"{ds.name}/rules_{n}gram"] = True
        rules[n] = got

    k = cfg.metrics.k
    models = {}
    for arch, base_hp in cfg.models.items():
        runs = []
        for seed in cfg.seeds:
            stage["name"] = f"train/{arch}/seed{seed}"
            hp = type(base_hp)(**{**asdict(base_hp), "seed": seed})
            fp_run = fingerprint("run", fp_split, asdict(hp), k)
            rdir = ddir / "runs" / f"{arch}_seed{seed}"
            got = _read_cached(rdir / "run.json", fp_run)
            if got is None:
                def _run(hp=hp, seed=seed, fp=fp_run, rdir=rdir, arch=arch):
                    model = build_model(hp, split.n_items + 1)
                    train(model, split, hp, eval_k=k)
                    rdir.mkdir(parents=True, exist_ok=True)
                    model.save(rdir / "model.npz")
                    original = evaluate_split(model, split.test_instances, k)
                    shuffled = evaluate_split(model, split.test_instances, k, shuffle_seed=seed)
                    rec = run_record(arch, seed, k, original, shuffled, split.test_instances, model)
                    rec["fingerprint"] = fp
                    _write_json(rdir / "run.json", rec)
                    return rec
                got = timer.run(f"{ds.name}/{arch}/seed{seed}", _run)
            else:
                timer.cached[f"{ds.name}/{arch}/seed{seed}"] = True
            runs.append(got)
        models[arch] = aggregate_runs(runs)

    return _dataset_entry(ds.name, stats, split.counts, split.boundary_ts, rules, models, cfg.metrics)


def _dataset_entry(name, stats, counts, boundary, rules, models, thresholds) -> dict:
    row = {
        "models": {a: {key: m[key] for key in ("hr_change", "ndcg_change", "jaccard")} for a, m in models.items()},
        "rules": {str(n): rules[n]["relative_change"] for n in rules},
    }
    verdict, reason = classify(row, thresholds)
    return {
        "name": name,
        "status": "ok",
        "stats": stats,
        "split": {"boundary_ts": boundary, "counts": counts},
        "rules": {str(n): {key: v for key, v in st.items() if key != "fingerprint"} for n, st in rules.items()},
        "models": models,
        "diagnostics": diagnostics_of(row),
        "flags": flags_for(row, thresholds),
        "verdict": verdict,
        "verdict_reason": reason,
    }


def run_analysis(cfg: RunConfig, out_dir=None) -> dict:
    """Run every dataset in ``cfg`` and return the report (also written to disk).

    A failing dataset is recorded with its stage and error; the rest proceed.
    """
    cfg.validate_paths()
    out = cfg.resolve_output(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timer = _Timer()
    started = time.perf_counter()
    entries = []
    for ds in cfg.datasets:
        log.info("dataset %s", ds.name)
        try:
            entries.append(analyze_dataset(cfg, ds, out, timer))
        except Exception as exc:  # one failing dataset must not sink the others
            log.error("dataset %s failed: %s", ds.name, exc)
            log.debug("traceback", exc_info=True)
            entries.append({
                "name": ds.name,
                "status": "failed",
                "stage": getattr(exc, "stage", None),
                "error": f"{type(exc).__name__}: {exc}",
            })
    report = assemble_report(cfg, entries)
    emit_report(report, out)
    manifest = {
        "workers": 1,
        "kernel_backend": kernels.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "total_seconds": time.perf_counter() - started,
        "stage_seconds": timer.stages,
        "stage_from_cache": timer.cached,
    }
    _write_json(out / "run_manifest.json", manifest)
    return report


def assemble_report(cfg: RunConfig, entries: list[dict]) -> dict:
    archs = list(cfg.models)
    ngrams = [str(n) for n in cfg.rules.ngrams]
    names = diagnostic_names(archs, ngrams)
    ok = [e for e in entries if e["status"] == "ok"]
    t = cfg.metrics
    config_echo = cfg.to_dict()
    config_echo.pop("output_dir", None)
    report = {
        "report_version": REPORT_VERSION,
        "verdict_rule": VERDICT_RULE.format(
            acc=t.accuracy_weak_above, jac=t.jaccard_weak_above, rules=t.rules_weak_above, strong=t.accuracy_strong_at_most
        ),
        "pipeline_order": list(PIPELINE_ORDER),
        "config": config_echo,
        "diagnostics": names,
        "datasets": entries,
        "ranks": None,
        "spearman": None,
    }
    if len(ok) >= 2:
        rows = [{"name": e["name"], **e["diagnostics"]} for e in ok]
        order_by = [f"{a}_ndcg_change" for a in archs]
        report["ranks"] = rank_datasets(rows, names, order_by)
        report["spearman"] = spearman_matrix(rows, names)
    return report


def spearman_matrix(rows: list[dict], names: list[str]) -> dict:
    matrix = []
    undefined = []
    for a in names:
        line = []
        for b in names:
            pairs = [(r[a], r[b]) for r in rows if r.get(a) is not None and r.get(b) is not None]
            rho = spearman(*zip(*pairs)) if len(pairs) >= 2 else None
            if rho is None:
                undefined.append([a, b])
            line.append(rho)
        matrix.append(line)
    return {"names": names, "matrix": matrix, "undefined": undefined}


# emission


def _clean(obj):
    if isinstance(obj, float):
        return None if not math.isfinite(obj) else obj
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, NaN/inf as null."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False)


def _fmt(v, pct=False) -> str:
    if v is None:
        return "n/a"
    if pct:
        return f"{v:+.0%}"
    return f"{v:.3f}" if isinstance(v, float) else str(v)


MODEL_COLUMNS = ("hr_before", "hr_after", "hr_change", "ndcg_before", "ndcg_after", "ndcg_change")
RULE_COLUMNS = ("rules_before", "rules_after_mean", "relative_change")


def model_table(report: dict) -> tuple[list[str], list[list]]:
    """Per-dataset model table: before/after/relative x HR/NDCG x model, then Jaccard per model."""
    archs = list(report.get("config", {}).get("models", {}))
    header = ["dataset"] + [f"{a}_{c}" for a in archs for c in MODEL_COLUMNS] + [f"{a}_jaccard" for a in archs]
    rows = []
    for e in report.get("datasets", []):
        if e.get("status") != "ok":
            continue
        m = e["models"]
        rows.append([e["name"]] + [m[a][c] for a in archs for c in MODEL_COLUMNS] + [m[a]["jaccard"] for a in archs])
    return header, rows


def rule_table(report: dict) -> tuple[list[str], list[list]]:
    ngrams = [str(n) for n in report.get("config", {}).get("rules", {}).get("ngrams", [])]
    header = ["dataset"] + [f"{n}gram_{c}" for n in ngrams for c in RULE_COLUMNS]
    rows = []
    for e in report.get("datasets", []):
        if e.get("status") != "ok":
            continue
        rows.append([e["name"]] + [e["rules"][n][c] for n in ngrams for c in RULE_COLUMNS])
    return header, rows


def stats_table(report: dict) -> tuple[list[str], list[list]]:
    header = ["dataset", "n_users", "n_items", "n_interactions", "avg_length", "density", "verdict"]
    rows = [
        [e["name"]] + [e["stats"][c] for c in header[1:-1]] + [e["verdict"]]
        for e in report.get("datasets", [])
        if e.get("status") == "ok"
    ]
    return header, rows


def rank_table(report: dict) -> tuple[list[str], list[list]]:
    """Datasets x diagnostics rank matrix, rows in overall order."""
    names = report.get("diagnostics", [])
    header = ["dataset"] + names + ["mean_order_rank"]
    ranks = report.get("ranks")
    if not ranks:
        return header, []
    pos = {n: j for j, n in enumerate(ranks["names"])}
    rows = []
    for name in ranks["order"]:
        j = pos[name]
        rows.append([name] + [ranks["ranks"][m][j] for m in names] + [ranks["mean_order_rank"][j]])
    return header, rows


def spearman_table(report: dict) -> tuple[list[str], list[list]]:
    names = report.get("diagnostics", [])
    sp = report.get("spearman")
    if not sp:
        return [""] + names, []
    return [""] + sp["names"], [[a] + line for a, line in zip(sp["names"], sp["matrix"])]


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def _md(header, rows, pct_cols=()) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for row in rows:
        cells = [_fmt(v, pct=header[j] in pct_cols) for j, v in enumerate(row)]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)


def records(report: dict):
    """One record per dataset x model x seed, then one aggregate per dataset x model."""
    for e in report.get("datasets", []):
        if e.get("status") != "ok":
            continue
        for arch, m in e["models"].items():
            for j, seed in enumerate(m["seeds"]):
                yield {
                    "kind": "seed",
                    "dataset": e["name"],
                    "architecture": arch,
                    "seed": seed,
                    **{key: m[f"{key}_per_seed"][j] for key in ("hr_before", "hr_after", "ndcg_before", "ndcg_after", "jaccard")},
                    "hr_change": m["hr_change_per_seed"][j],
                    "ndcg_change": m["ndcg_change_per_seed"][j],
                }
    for e in report.get("datasets", []):
        if e.get("status") != "ok":
            continue
        for arch, m in e["models"].items():
            yield {
                "kind": "aggregate",
                "dataset": e["name"],
                "architecture": arch,
                **{key: m[key] for key in ("hr_before", "hr_after", "ndcg_before", "ndcg_after", "jaccard", "hr_change", "ndcg_change")},
                **{f"{key}_std": m[f"{key}_std"] for key in ("hr_before", "hr_after", "ndcg_before", "ndcg_after", "jaccard")},
                "verdict": e["verdict"],
            }


def render_markdown(report: dict) -> str:
    parts = ["# Sequential structure report", "", "## Decision rule", "", report.get("verdict_rule", ""), ""]
    parts += ["Preprocessing order: " + " -> ".join(report.get("pipeline_order", [])), ""]
    parts += ["## Datasets", "", _md(*stats_table(report)), ""]
    failed = [e for e in report.get("datasets", []) if e.get("status") != "ok"]
    if failed:
        parts += ["## Failed datasets", ""]
        parts += [f"- {e['name']} (stage {e.get('stage')}): {e.get('error')}" for e in failed]
        parts.append("")
    header, rows = model_table(report)
    parts += ["## Model-based diagnostics", "", _md(header, rows, pct_cols={h for h in header if h.endswith("_change")}), ""]
    header, rows = rule_table(report)
    parts += ["## Rule-based diagnostics", "", _md(header, rows, pct_cols={h for h in header if h.endswith("relative_change")}), ""]
    parts += ["## Verdicts", ""]
    parts += [f"- {e['name']}: {e['verdict']} ({e['verdict_reason']})" for e in report.get("datasets", []) if e.get("status") == "ok"]
    parts += ["", "## Ranks (1 = strongest sequential structure)", "", _md(*rank_table(report)), ""]
    parts += ["## Spearman correlation between diagnostics", "", _md(*spearman_table(report)), ""]
    return "\n".join(parts)


def emit_report(report: dict, out_dir, formats=("json", "jsonl", "md", "csv")) -> list[Path]:
    """Write the report files; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        path = out / name
        path.write_text(text)
        written.append(path)

    if "json" in formats:
        put("report.json", dumps(report) + "\n")
    if "jsonl" in formats:
        put("records.jsonl", "".join(json.dumps(_clean(r), sort_keys=True) + "\n" for r in records(report)))
    if "md" in formats:
        put("report.md", render_markdown(report))
    if "csv" in formats:
        put("table_models.csv", _csv(*model_table(report)))
        put("table_rules.csv", _csv(*rule_table(report)))
        put("stats.csv", _csv(*stats_table(report)))
        put("ranks.csv", _csv(*rank_table(report)))
        put("spearman.csv", _csv(*spearman_table(report)))
    return written


def empty_report(cfg: RunConfig | None = None) -> dict:
    if cfg is None:
        return {"report_version": REPORT_VERSION, "config": {}, "diagnostics": [], "datasets": [], "ranks": None, "spearman": None}
    return assemble_report(cfg, [])


# provenance check


def verify(out_dir, tol: float = 1e-12) -> list[str]:
    """Re-derive every aggregate in ``report.json`` from the per-seed artifacts.

    Returns a list of human-readable mismatches (empty when consistent).
    """
    out = Path(out_dir)
    report = json.loads((out / "report.json").read_text())
    t = MetricsConfig(**report["config"]["metrics"])
    problems = []

    def close(a, b):
        if a is None or b is None:
            return a is b
        return abs(a - b) <= tol * max(1.0, abs(a), abs(b))

    for e in report["datasets"]:
        if e["status"] != "ok":
            continue
        name = e["name"]
        ddir = out / "datasets" / name
        for n, st in e["rules"].items():
            disk = json.loads((ddir / f"rules_{n}gram.json").read_text())
            mean = math.fsum(disk["per_seed_after"]) / len(disk["per_seed_after"])
            change = None if disk["rules_before"] == 0 else (mean - disk["rules_before"]) / disk["rules_before"]
            if disk["rules_before"] != st["rules_before"] or not close(mean, st["rules_after_mean"]) or not close(change, st["relative_change"]):
                problems.append(f"{name}: {n}-gram rule stats differ from rules_{n}gram.json")
        for arch, agg in e["models"].items():
            runs = []
            for seed in agg["seeds"]:
                rec = json.loads((ddir / "runs" / f"{arch}_seed{seed}" / "run.json").read_text())
                again = recompute_run(rec)
                for key, v in again.items():
                    if not close(v, rec[key]):
                        problems.append(f"{name}/{arch}/seed{seed}: {key} {rec[key]} != recomputed {v}")
                runs.append(rec)
            fresh = aggregate_runs(runs)
            for key in ("hr_before", "hr_after", "ndcg_before", "ndcg_after", "jaccard", "hr_change", "ndcg_change"):
                if not close(fresh[key], agg[key]):
                    problems.append(f"{name}/{arch}: aggregate {key} {agg[key]} != recomputed {fresh[key]}")
        row = {
            "models": {a: {k: m[k] for k in ("hr_change", "ndcg_change", "jaccard")} for a, m in e["models"].items()},
            "rules": {n: st["relative_change"] for n, st in e["rules"].items()},
        }
        verdict, _ = classify(row, t)
        if verdict != e["verdict"]:
            problems.append(f"{name}: verdict {e['verdict']} != recomputed {verdict}")
        if flags_for(row, t) != e["flags"]:
            problems.append(f"{name}: flags differ from thresholds")
    return problems
